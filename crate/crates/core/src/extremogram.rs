//! Extremograms: tail limits of copulas and their empirical counterparts.

use serde::{Deserialize, Serialize};

use crate::copulas::CopulaModel;
use crate::dataset::{DistanceBins, SpatialDataset};
use crate::dependence::{CurveKind, DependenceCurve};
use crate::error::{domain, invalid, Error, Result};
use crate::numeric::quantile_sorted;
use crate::par;

/// Which tail the extremogram looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    Upper,
    Lower,
}

impl std::str::FromStr for TailSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Self::Upper),
            "lower" => Ok(Self::Lower),
            other => Err(invalid(format!("unknown tail side '{other}' (expected upper or lower)"))),
        }
    }
}

/// Default probes: `1 − 10^{−k}` (upper) or `10^{−k}` (lower), `k = 2..6`.
pub fn default_probes(side: TailSide) -> Vec<f64> {
    (2..=6)
        .map(|k| {
            let t = 10f64.powi(-k);
            match side {
                TailSide::Upper => 1.0 - t,
                TailSide::Lower => t,
            }
        })
        .collect()
}

/// Tail limit evaluated along a probe sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailLimit {
    /// Quotient at the last probe, clamped to `[0, 1]`.
    pub value: f64,
    /// Largest absolute difference between successive quotients.
    pub diagnostic: f64,
    pub clamped: bool,
    /// Unclamped quotient at every probe.
    pub path: Vec<f64>,
}

fn finish_limit(path: Vec<f64>) -> Result<TailLimit> {
    if let Some(bad) = path.iter().find(|q| !q.is_finite()) {
        return Err(domain(format!("non-finite tail quotient {bad}")));
    }
    let raw = *path.last().expect("probe list checked non-empty");
    let value = raw.clamp(0.0, 1.0);
    let diagnostic = path.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    Ok(TailLimit { value, diagnostic, clamped: value != raw, path })
}

fn check_probes(probes: &[f64]) -> Result<()> {
    if probes.len() < 2 {
        return Err(invalid("at least 2 probes are required"));
    }
    if let Some(p) = probes.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(invalid(format!("probe {p} outside (0,1)")));
    }
    Ok(())
}

/// Copula extremogram: `2 − (1 − C(u,u))/(1 − u)` as `u → 1` (upper) or
/// `C(u,u)/u` as `u → 0` (lower).
pub fn extremogram_copula(model: &CopulaModel, side: TailSide, probes: &[f64]) -> Result<TailLimit> {
    check_probes(probes)?;
    let path = probes
        .iter()
        .map(|&u| {
            let d = model.diag(u);
            match side {
                TailSide::Upper => 2.0 - (1.0 - d) / (1.0 - u),
                TailSide::Lower => d / u,
            }
        })
        .collect();
    finish_limit(path)
}

/// Copula cross-extremogram `1 − (u₂ − C(u₁,u₂))/(1 − u₁)` along the paired
/// path `(u₁ₖ, u₂ₖ)`.
pub fn cross_extremogram_copula(model: &CopulaModel, u1: &[f64], u2: &[f64]) -> Result<TailLimit> {
    if u1.len() != u2.len() {
        return Err(invalid("probe lists must have equal length"));
    }
    check_probes(u1)?;
    check_probes(u2)?;
    let path = u1
        .iter()
        .zip(u2)
        .map(|(&a, &b)| 1.0 - (b - model.eval(a, b)) / (1.0 - a))
        .collect();
    finish_limit(path)
}

const MISSING: u8 = 2;

/// Exceedance indicator per `[site][rep]` of one variable (`MISSING` for
/// unobserved cells). The lower side uses the `1 − q` level with `<`.
fn exceedances(dataset: &SpatialDataset, var: usize, q: f64, side: TailSide) -> Result<Vec<Vec<u8>>> {
    let level = match side {
        TailSide::Upper => q,
        TailSide::Lower => 1.0 - q,
    };
    par::map_indexed(dataset.n_sites(), |s| {
        let mut col = dataset.column(s, var);
        if col.is_empty() {
            return Err(Error::InsufficientData(format!("site {} has no observations", dataset.sites()[s].id)));
        }
        col.sort_by(f64::total_cmp);
        let t = quantile_sorted(&col, level);
        Ok((0..dataset.n_reps())
            .map(|r| match dataset.get_var(r, s, var) {
                None => MISSING,
                Some(x) => u8::from(match side {
                    TailSide::Upper => x > t,
                    TailSide::Lower => x < t,
                }),
            })
            .collect())
    })
    .into_iter()
    .collect()
}

fn check_level(q: f64) -> Result<()> {
    if !(q > 0.5 && q < 1.0) {
        return Err(invalid(format!("exceedance level q must lie in (0.5, 1), got {q}")));
    }
    Ok(())
}

#[derive(Default, Clone, Copy)]
struct Counts {
    joint: u64,
    cond: u64,
}

fn count_pair(a: &[u8], b: &[u8]) -> (Counts, Counts) {
    let (mut ab, mut ba) = (Counts::default(), Counts::default());
    for (&x, &y) in a.iter().zip(b) {
        if x == MISSING || y == MISSING {
            continue;
        }
        let joint = u64::from(x & y);
        ab.joint += joint;
        ba.joint += joint;
        ab.cond += u64::from(x);
        ba.cond += u64::from(y);
    }
    (ab, ba)
}

fn curve(kind: CurveKind, bins: &DistanceBins, estimates: Vec<Option<f64>>) -> DependenceCurve {
    for (k, e) in estimates.iter().enumerate() {
        if e.is_none() && !bins.pairs(k).is_empty() {
            log::warn!("bin {k}: no conditioning exceedances, estimate left empty");
        }
    }
    DependenceCurve {
        kind,
        bin_centers: bins.centers(),
        n_pairs: bins.pairs_per_bin().iter().map(Vec::len).collect(),
        clamped: vec![false; estimates.len()],
        estimates,
    }
}

fn ratio(joint: u64, cond: u64) -> Option<f64> {
    (cond > 0).then(|| joint as f64 / cond as f64)
}

/// Pooled same-variable extremogram of variable `var`.
fn pooled(flags: &[Vec<u8>], bins: &DistanceBins) -> Vec<Option<f64>> {
    par::map_slice(bins.pairs_per_bin(), |pairs| {
        let (mut joint, mut cond) = (0u64, 0u64);
        for &(i, j) in pairs {
            let (ij, ji) = count_pair(&flags[i], &flags[j]);
            joint += ij.joint + ji.joint;
            cond += ij.cond + ji.cond;
        }
        ratio(joint, cond)
    })
}

/// Oriented cross term: conditioning flags `a` at the first site of each
/// pair, target flags `b` at the second.
fn oriented(a: &[Vec<u8>], b: &[Vec<u8>], bins: &DistanceBins) -> Vec<Option<f64>> {
    par::map_slice(bins.pairs_per_bin(), |pairs| {
        let (mut joint, mut cond) = (0u64, 0u64);
        for &(i, j) in pairs {
            let (ij, _) = count_pair(&a[i], &b[j]);
            joint += ij.joint;
            cond += ij.cond;
        }
        ratio(joint, cond)
    })
}

fn check_bins(dataset: &SpatialDataset, bins: &DistanceBins) -> Result<()> {
    if dataset.n_reps() < 2 {
        return Err(Error::InsufficientData("extremogram needs at least 2 replications".into()));
    }
    if bins.total_pairs() == 0 {
        return Err(Error::InsufficientData("every distance bin is empty".into()));
    }
    Ok(())
}

/// Empirical extremogram of variable 0 at level `q`.
///
/// Per bin: joint exceedances over conditioning exceedances, counting both
/// orientations of every pair. Each site is thresholded at its own empirical
/// `q`-quantile (`1 − q` on the lower side).
pub fn empirical_extremogram(
    dataset: &SpatialDataset,
    bins: &DistanceBins,
    q: f64,
    side: TailSide,
) -> Result<DependenceCurve> {
    check_level(q)?;
    check_bins(dataset, bins)?;
    let flags = exceedances(dataset, 0, q, side)?;
    Ok(curve(CurveKind::Extremogram, bins, pooled(&flags, bins)))
}

/// The four curves of the bivariate extremogram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremogramMatrix {
    pub rho11: DependenceCurve,
    pub rho22: DependenceCurve,
    /// Variable 1 exceeds at the first site of each pair, variable 2 at the second.
    pub rho12: DependenceCurve,
    /// Variable 2 exceeds at the first site of each pair, variable 1 at the second.
    pub rho21: DependenceCurve,
}

/// Empirical extremogram matrix of a two-variable dataset (upper tail).
///
/// Diagonal terms pool both pair orientations. Cross terms are oriented: for a
/// pair `(i, j)` with `i` before `j` in site order, `x = sᵢ` and `x + h = sⱼ`.
pub fn extremogram_matrix(dataset: &SpatialDataset, bins: &DistanceBins, q: f64) -> Result<ExtremogramMatrix> {
    if dataset.n_vars() != 2 {
        return Err(invalid(format!("extremogram matrix needs 2 variables, dataset has {}", dataset.n_vars())));
    }
    check_level(q)?;
    check_bins(dataset, bins)?;
    let f1 = exceedances(dataset, 0, q, TailSide::Upper)?;
    let f2 = exceedances(dataset, 1, q, TailSide::Upper)?;
    Ok(ExtremogramMatrix {
        rho11: curve(CurveKind::Extremogram, bins, pooled(&f1, bins)),
        rho22: curve(CurveKind::Extremogram, bins, pooled(&f2, bins)),
        rho12: curve(CurveKind::CrossExtremogram, bins, oriented(&f1, &f2, bins)),
        rho21: curve(CurveKind::CrossExtremogram, bins, oriented(&f2, &f1, bins)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{bin_pairs, Site};
    use crate::dependence::{theta_from_copula, DEFAULT_THETA_PROBES};
    use proptest::prelude::*;

    fn line_sites(n: usize) -> Vec<Site> {
        (0..n).map(|k| Site::new(format!("s{k}"), k as f64, 0.0)).collect()
    }

    fn pairs_dataset(pairs: &[(f64, f64)]) -> SpatialDataset {
        SpatialDataset::from_rows(line_sites(2), pairs.iter().map(|&(a, b)| vec![a, b]).collect()).unwrap()
    }

    #[test]
    fn copula_limits_closed_forms() {
        let up = default_probes(TailSide::Upper);
        let lo = default_probes(TailSide::Lower);
        for &alpha in &[1.2, 2.0, 5.0] {
            let g = CopulaModel::gumbel(alpha).unwrap();
            let chi = extremogram_copula(&g, TailSide::Upper, &up).unwrap();
            assert!((chi.value - (2.0 - 2f64.powf(1.0 / alpha))).abs() < 1e-6, "{alpha}: {chi:?}");
            let theta = theta_from_copula(&g, &DEFAULT_THETA_PROBES).unwrap().theta;
            assert!((chi.value - (2.0 - theta)).abs() < 1e-6);
        }
        let ind = extremogram_copula(&CopulaModel::Independence, TailSide::Upper, &up).unwrap();
        assert!(ind.value.abs() < 1e-5);
        for side in [TailSide::Upper, TailSide::Lower] {
            let c = extremogram_copula(&CopulaModel::Comonotone, side, &default_probes(side)).unwrap();
            assert!((c.value - 1.0).abs() < 1e-9);
        }
        let cl = extremogram_copula(&CopulaModel::clayton(1.0).unwrap(), TailSide::Lower, &lo).unwrap();
        assert!((cl.value - 0.5).abs() < 1e-5, "{cl:?}");
    }

    #[test]
    fn diagnostic_shrinks_along_probes() {
        let models = [
            CopulaModel::gumbel(2.0).unwrap(),
            CopulaModel::clayton(1.0).unwrap(),
            CopulaModel::gaussian(0.5).unwrap(),
            CopulaModel::Independence,
        ];
        for m in &models {
            for side in [TailSide::Upper, TailSide::Lower] {
                let l = extremogram_copula(m, side, &default_probes(side)).unwrap();
                let d: Vec<f64> = l.path.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
                for w in d.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "{m} {side:?}: {d:?}");
                }
            }
        }
    }

    #[test]
    fn cross_limit_examples() {
        let p = default_probes(TailSide::Upper);
        let g = CopulaModel::gumbel(2.0).unwrap();
        let c = cross_extremogram_copula(&g, &p, &p).unwrap();
        let e = extremogram_copula(&g, TailSide::Upper, &p).unwrap();
        assert!((c.value - e.value).abs() < 1e-9 && (c.value - 0.58579).abs() < 1e-5);
        let c = cross_extremogram_copula(&CopulaModel::Independence, &p, &p).unwrap();
        assert!(c.value.abs() < 1e-5);
        let c = cross_extremogram_copula(&CopulaModel::Comonotone, &p, &p).unwrap();
        assert!((c.value - 1.0).abs() < 1e-9);
        assert!(cross_extremogram_copula(&g, &p, &p[..3]).is_err());
    }

    #[test]
    fn probe_validation() {
        let g = CopulaModel::gumbel(2.0).unwrap();
        assert!(extremogram_copula(&g, TailSide::Upper, &[0.9]).is_err());
        assert!(extremogram_copula(&g, TailSide::Upper, &[0.9, 1.0]).is_err());
    }

    #[test]
    fn empirical_comonotone_is_one() {
        let pairs: Vec<(f64, f64)> = (0..200).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let ds = pairs_dataset(&pairs);
        let bins = bin_pairs(&ds, &[0.0, 2.0]).unwrap();
        for side in [TailSide::Upper, TailSide::Lower] {
            let c = empirical_extremogram(&ds, &bins, 0.9, side).unwrap();
            assert_eq!(c.estimates, vec![Some(1.0)]);
        }
    }

    #[test]
    fn empirical_independence_finite_level() {
        let pairs = CopulaModel::Independence.sample_pairs(100_000, 5).unwrap();
        let ds = pairs_dataset(&pairs);
        let bins = bin_pairs(&ds, &[0.0, 2.0]).unwrap();
        let c = empirical_extremogram(&ds, &bins, 0.95, TailSide::Upper).unwrap();
        assert!((c.estimates[0].unwrap() - 0.05).abs() < 0.01, "{c:?}");
    }

    #[test]
    fn empirical_gumbel_finite_level() {
        let (alpha, q) = (2.0f64, 0.98f64);
        let pairs = CopulaModel::gumbel(alpha).unwrap().sample_pairs(100_000, 9).unwrap();
        let ds = pairs_dataset(&pairs);
        let bins = bin_pairs(&ds, &[0.0, 2.0]).unwrap();
        let c = empirical_extremogram(&ds, &bins, q, TailSide::Upper).unwrap();
        let exact = (1.0 - 2.0 * q + q.powf(2f64.powf(1.0 / alpha))) / (1.0 - q);
        assert!((c.estimates[0].unwrap() - exact).abs() < 0.05, "{c:?} vs {exact}");
    }

    #[test]
    fn empty_conditioning_gives_none() {
        // constant columns never exceed their own quantile
        let ds = pairs_dataset(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        let bins = bin_pairs(&ds, &[0.0, 2.0]).unwrap();
        let c = empirical_extremogram(&ds, &bins, 0.9, TailSide::Upper).unwrap();
        assert_eq!(c.estimates, vec![None]);
        assert!(empirical_extremogram(&ds, &bins, 0.4, TailSide::Upper).is_err());
    }

    fn stacked(v1: Vec<Vec<f64>>, v2: Vec<Vec<f64>>, n_sites: usize) -> SpatialDataset {
        let a = SpatialDataset::from_rows(line_sites(n_sites), v1).unwrap();
        let b = SpatialDataset::from_rows(line_sites(n_sites), v2).unwrap();
        SpatialDataset::stack_variables(&a, &b).unwrap()
    }

    fn field(n_reps: usize, n_sites: usize, seed: u64) -> Vec<Vec<f64>> {
        let u = CopulaModel::gumbel(1.5).unwrap().sample_pairs(n_reps * n_sites, seed).unwrap();
        (0..n_reps).map(|r| (0..n_sites).map(|s| u[r * n_sites + s].0).collect()).collect()
    }

    #[test]
    fn matrix_duplicated_variable() {
        let v = field(2000, 4, 3);
        let ds = stacked(v.clone(), v, 4);
        let bins = bin_pairs(&ds, &[0.0, 1.5, 2.5, 3.5]).unwrap();
        let m = extremogram_matrix(&ds, &bins, 0.9).unwrap();
        for c in [&m.rho22, &m.rho12, &m.rho21] {
            for (a, b) in m.rho11.estimates.iter().zip(&c.estimates) {
                assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_countermonotone_cross_is_zero() {
        let base: Vec<f64> = CopulaModel::Independence.sample_pairs(1000, 1).unwrap().iter().map(|p| p.0).collect();
        let v1: Vec<Vec<f64>> = base.iter().map(|&x| vec![x, x, x]).collect();
        let v2: Vec<Vec<f64>> = base.iter().map(|&x| vec![-x, -x, -x]).collect();
        let ds = stacked(v1, v2, 3);
        let bins = bin_pairs(&ds, &[0.0, 1.5, 2.5]).unwrap();
        let m = extremogram_matrix(&ds, &bins, 0.9).unwrap();
        assert_eq!(m.rho12.estimates, vec![Some(0.0), Some(0.0)]);
        assert_eq!(m.rho21.estimates, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn matrix_cross_terms_are_asymmetric() {
        // variable 2 at the second site copies variable 1 at the first
        let u = CopulaModel::Independence.sample_pairs(5000, 4).unwrap();
        let w = CopulaModel::Independence.sample_pairs(5000, 8).unwrap();
        let v1: Vec<Vec<f64>> = (0..5000).map(|r| vec![u[r].0, u[r].1]).collect();
        let v2: Vec<Vec<f64>> = (0..5000).map(|r| vec![w[r].0, u[r].0]).collect();
        let ds = stacked(v1, v2, 2);
        let bins = bin_pairs(&ds, &[0.5, 1.5]).unwrap();
        let m = extremogram_matrix(&ds, &bins, 0.9).unwrap();
        assert_eq!(m.rho12.estimates[0], Some(1.0));
        assert!(m.rho21.estimates[0].unwrap() < 0.2);
    }

    proptest! {
        #[test]
        fn empirical_estimates_in_unit_interval(seed in 0u64..1000, q in 0.6f64..0.99) {
            let pairs = CopulaModel::clayton(0.7).unwrap().sample_pairs(300, seed).unwrap();
            let ds = pairs_dataset(&pairs);
            let bins = bin_pairs(&ds, &[0.0, 2.0]).unwrap();
            for side in [TailSide::Upper, TailSide::Lower] {
                let c = empirical_extremogram(&ds, &bins, q, side).unwrap();
                if let Some(e) = c.estimates[0] {
                    prop_assert!((0.0..=1.0).contains(&e));
                }
            }
        }
    }
}
