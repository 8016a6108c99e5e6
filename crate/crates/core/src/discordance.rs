//! Partition discordance degrees.
//!
//! For a block `N` of sites and thresholds `x`, the upper discordance degree
//! is `P(X_N > x_N | X_{N̄} ≤ x_{N̄})` (every target site strictly above its
//! threshold, every other site at or below); the lower degree mirrors both
//! inequalities.

use serde::Serialize;

use crate::dataset::SpatialDataset;
use crate::error::{invalid, Error, Result};
use crate::extremogram::TailSide;
use crate::numeric::median_sorted;

/// A non-empty proper subset of site indices (the target block).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    targets: Vec<usize>,
    n_sites: usize,
}

impl Partition {
    pub fn new(n_sites: usize, targets: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut targets: Vec<usize> = targets.into_iter().collect();
        targets.sort_unstable();
        targets.dedup();
        if targets.is_empty() {
            return Err(invalid("target block is empty"));
        }
        if let Some(&bad) = targets.iter().find(|&&s| s >= n_sites) {
            return Err(invalid(format!("site index {bad} out of range for {n_sites} sites")));
        }
        if targets.len() == n_sites {
            return Err(invalid("target block must be a proper subset of the sites"));
        }
        Ok(Self { targets, n_sites })
    }

    /// Partition from site ids of a dataset.
    pub fn from_ids<S: AsRef<str>>(dataset: &SpatialDataset, ids: &[S]) -> Result<Self> {
        let idx = ids
            .iter()
            .map(|id| {
                dataset
                    .site_index(id.as_ref())
                    .ok_or_else(|| Error::Dataset(format!("unknown site '{}'", id.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dataset.n_sites(), idx)
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.n_sites).filter(|s| self.targets.binary_search(s).is_err()).collect()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
}

/// Discordance degree with the counts behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discordance {
    pub degree: f64,
    /// Replications where the conditioning event holds.
    pub n_condition: usize,
    /// Replications where both the conditioning and the target event hold.
    pub n_joint: usize,
}

/// Empirical discordance degree over the replications observed at every site.
pub fn discordance_degree(
    dataset: &SpatialDataset,
    part: &Partition,
    thresholds: &[f64],
    direction: TailSide,
) -> Result<Discordance> {
    if part.n_sites() != dataset.n_sites() {
        return Err(invalid("partition and dataset have different site counts"));
    }
    if thresholds.len() != dataset.n_sites() {
        return Err(invalid(format!(
            "{} thresholds given for {} sites",
            thresholds.len(),
            dataset.n_sites()
        )));
    }
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(invalid("thresholds must not be NaN"));
    }
    let complement = part.complement();
    let (mut n_condition, mut n_joint) = (0usize, 0usize);
    for r in 0..dataset.n_reps() {
        if (0..dataset.n_sites()).any(|s| dataset.raw(r, s).is_nan()) {
            continue;
        }
        let x = |s: usize| dataset.raw(r, s);
        let conditioned = complement.iter().all(|&s| match direction {
            TailSide::Upper => x(s) <= thresholds[s],
            TailSide::Lower => x(s) >= thresholds[s],
        });
        if !conditioned {
            continue;
        }
        n_condition += 1;
        let hit = part.targets().iter().all(|&s| match direction {
            TailSide::Upper => x(s) > thresholds[s],
            TailSide::Lower => x(s) < thresholds[s],
        });
        n_joint += usize::from(hit);
    }
    if n_condition == 0 {
        return Err(Error::InsufficientData("conditioning event never observed".into()));
    }
    Ok(Discordance { degree: n_joint as f64 / n_condition as f64, n_condition, n_joint })
}

/// Per-site empirical medians (mean of the central pair for even counts).
pub fn site_medians(dataset: &SpatialDataset) -> Result<Vec<f64>> {
    (0..dataset.n_sites())
        .map(|s| {
            let mut col = dataset.column(s, 0);
            if col.is_empty() {
                return Err(Error::InsufficientData(format!("site {} has no observations", dataset.sites()[s].id)));
            }
            col.sort_by(f64::total_cmp);
            Ok(median_sorted(&col))
        })
        .collect()
}

/// Discordance degree at the per-site empirical medians.
pub fn median_discordance(dataset: &SpatialDataset, part: &Partition, direction: TailSide) -> Result<Discordance> {
    let m = site_medians(dataset)?;
    discordance_degree(dataset, part, &m, direction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::CopulaModel;
    use crate::dataset::Site;
    use proptest::prelude::*;

    fn sites(n: usize) -> Vec<Site> {
        (0..n).map(|k| Site::new(format!("s{k}"), k as f64, 0.0)).collect()
    }

    fn uniform_columns(n_reps: usize, n_sites: usize, seed: u64) -> SpatialDataset {
        let u = CopulaModel::Independence.sample_pairs(n_reps * n_sites, seed).unwrap();
        let rows = (0..n_reps).map(|r| (0..n_sites).map(|s| u[r * n_sites + s].0).collect()).collect();
        SpatialDataset::from_rows(sites(n_sites), rows).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, []).is_err());
        assert!(Partition::new(3, [0, 1, 2]).is_err());
        assert!(Partition::new(3, [3]).is_err());
        let p = Partition::new(4, [2, 0, 2]).unwrap();
        assert_eq!(p.targets(), &[0, 2]);
        assert_eq!(p.complement(), vec![1, 3]);
    }

    #[test]
    fn hand_counted() {
        let rows = vec![
            vec![2.0, 3.0, 0.0],
            vec![2.0, 0.0, 0.5],
            vec![0.0, 3.0, 2.0],
            vec![5.0, 5.0, 1.0],
        ];
        let ds = SpatialDataset::from_rows(sites(3), rows).unwrap();
        let p = Partition::new(3, [0, 1]).unwrap();
        // site 2 <= 1 in reps 1, 2, 4; both targets > 1 in reps 1 and 4
        let d = discordance_degree(&ds, &p, &[1.0, 1.0, 1.0], TailSide::Upper).unwrap();
        assert_eq!((d.n_condition, d.n_joint), (3, 2));
        assert!((d.degree - 2.0 / 3.0).abs() < 1e-15);
        // lower: site 2 >= 1 in reps 3, 4; both targets < 1 in neither
        let d = discordance_degree(&ds, &p, &[1.0, 1.0, 1.0], TailSide::Lower).unwrap();
        assert_eq!((d.n_condition, d.n_joint), (2, 0));
        assert!(discordance_degree(&ds, &p, &[1.0, 1.0, -1.0], TailSide::Upper).is_err());
    }

    #[test]
    fn independence_oracle() {
        let ds = uniform_columns(100_000, 2, 3);
        let p = Partition::new(2, [0]).unwrap();
        let d = discordance_degree(&ds, &p, &site_medians(&ds).unwrap(), TailSide::Upper).unwrap();
        assert!((d.degree - 0.5).abs() < 0.02);
        let ds = uniform_columns(100_000, 3, 4);
        let p = Partition::new(3, [0, 1]).unwrap();
        let d = median_discordance(&ds, &p, TailSide::Upper).unwrap();
        assert!((d.degree - 0.25).abs() < 0.02, "{d:?}");
    }

    #[test]
    fn comonotone_and_countermonotone() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, 2.0 * i as f64, i as f64 - 7.0]).collect();
        let ds = SpatialDataset::from_rows(sites(3), rows).unwrap();
        for t in [vec![0], vec![1, 2], vec![0, 2]] {
            let d = median_discordance(&ds, &Partition::new(3, t).unwrap(), TailSide::Upper).unwrap();
            assert_eq!(d.degree, 0.0);
        }
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, -(i as f64)]).collect();
        let ds = SpatialDataset::from_rows(sites(2), rows).unwrap();
        let d = median_discordance(&ds, &Partition::new(2, [0]).unwrap(), TailSide::Upper).unwrap();
        assert_eq!(d.degree, 1.0);
    }

    #[test]
    fn missing_rows_are_skipped() {
        let rows = vec![vec![2.0, 0.0], vec![f64::NAN, 0.0], vec![0.0, 0.0]];
        let ds = SpatialDataset::from_rows(sites(2), rows).unwrap();
        let d = discordance_degree(&ds, &Partition::new(2, [0]).unwrap(), &[1.0, 1.0], TailSide::Upper).unwrap();
        assert_eq!((d.n_condition, d.n_joint), (2, 1));
    }

    fn arb_dataset() -> impl Strategy<Value = SpatialDataset> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 5..60)
            .prop_map(|rows| SpatialDataset::from_rows(sites(3), rows).unwrap())
    }

    proptest! {
        #[test]
        fn mirror_symmetry(ds in arb_dataset(), t in prop::collection::vec(-2.0f64..2.0, 3)) {
            let p = Partition::new(3, [0, 2]).unwrap();
            let flipped = ds.map_cells(|_, _, _, x| -x);
            let neg: Vec<f64> = t.iter().map(|x| -x).collect();
            let up = discordance_degree(&ds, &p, &t, TailSide::Upper);
            let lo = discordance_degree(&flipped, &p, &neg, TailSide::Lower);
            match (up, lo) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one side failed"),
            }
        }

        #[test]
        fn raising_target_thresholds_never_increases(ds in arb_dataset(), t in prop::collection::vec(-2.0f64..2.0, 3), bump in 0.0f64..2.0) {
            let p = Partition::new(3, [1]).unwrap();
            if let Ok(a) = discordance_degree(&ds, &p, &t, TailSide::Upper) {
                prop_assert!((0.0..=1.0).contains(&a.degree));
                let mut t2 = t.clone();
                t2[1] += bump;
                let b = discordance_degree(&ds, &p, &t2, TailSide::Upper).unwrap();
                prop_assert!(b.degree <= a.degree);
            }
        }
    }
}
