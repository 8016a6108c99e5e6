//! Spatial data containers, CSV ingestion and distance binning.
//!
//! A [`SpatialDataset`] stores an `n_reps × n_sites × n_vars` block of
//! observations. Missing cells are stored as `NaN` and are skipped pairwise by
//! every estimator; they are never imputed.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{invalid, Error, Result};

/// A measurement location on a planar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl Site {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self { id: id.into(), x, y }
    }

    pub fn distance(&self, other: &Site) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Replicated observations of one or more variables at a set of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    sites: Vec<Site>,
    rep_ids: Vec<String>,
    n_vars: usize,
    variable_names: Option<Vec<String>>,
    values: Vec<f64>,
}

impl SpatialDataset {
    /// Build a single-variable dataset from row-major replications.
    ///
    /// Every row must have one entry per site; `NaN` marks a missing cell.
    pub fn from_rows(sites: Vec<Site>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_sites = sites.len();
        let rep_ids = (1..=rows.len()).map(|r| r.to_string()).collect();
        let mut values = Vec::with_capacity(rows.len() * n_sites);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n_sites {
                return Err(Error::Dataset(format!(
                    "replication {r} has {} values for {n_sites} sites",
                    row.len()
                )));
            }
            values.extend(row);
        }
        Self::from_parts(sites, rep_ids, 1, None, values)
    }

    /// Build a dataset from a flat buffer laid out as `[rep][site][var]`.
    pub fn from_parts(
        sites: Vec<Site>,
        rep_ids: Vec<String>,
        n_vars: usize,
        variable_names: Option<Vec<String>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Dataset("no sites".into()));
        }
        if rep_ids.is_empty() {
            return Err(Error::Dataset("no replications".into()));
        }
        if n_vars == 0 {
            return Err(Error::Dataset("at least one variable is required".into()));
        }
        if values.len() != rep_ids.len() * sites.len() * n_vars {
            return Err(Error::Dataset(format!(
                "value buffer has {} cells, expected {}",
                values.len(),
                rep_ids.len() * sites.len() * n_vars
            )));
        }
        if let Some(names) = &variable_names {
            if names.len() != n_vars {
                return Err(Error::Dataset("one name per variable required".into()));
            }
        }
        let mut seen = HashMap::new();
        for (i, s) in sites.iter().enumerate() {
            if !s.x.is_finite() || !s.y.is_finite() {
                return Err(Error::Dataset(format!("site {} has non-finite coordinates", s.id)));
            }
            if seen.insert(s.id.as_str(), i).is_some() {
                return Err(Error::Dataset(format!("duplicate site id {}", s.id)));
            }
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::Dataset("infinite observation".into()));
        }
        Ok(Self { sites, rep_ids, n_vars, variable_names, values })
    }

    /// Combine two single-variable datasets on the same sites and replications
    /// into a two-variable dataset.
    pub fn stack_variables(first: &SpatialDataset, second: &SpatialDataset) -> Result<Self> {
        if first.n_vars != 1 || second.n_vars != 1 {
            return Err(invalid("stack_variables expects single-variable inputs"));
        }
        if first.sites != second.sites {
            return Err(Error::Dataset("variables are observed on different sites".into()));
        }
        if first.rep_ids != second.rep_ids {
            return Err(Error::Dataset("variables have different replications".into()));
        }
        let values = first
            .values
            .iter()
            .zip(&second.values)
            .flat_map(|(&a, &b)| [a, b])
            .collect();
        Self::from_parts(
            first.sites.clone(),
            first.rep_ids.clone(),
            2,
            Some(vec!["var1".into(), "var2".into()]),
            values,
        )
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn rep_ids(&self) -> &[String] {
        &self.rep_ids
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_reps(&self) -> usize {
        self.rep_ids.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn variable_names(&self) -> Option<&[String]> {
        self.variable_names.as_deref()
    }

    #[inline]
    fn index(&self, rep: usize, site: usize, var: usize) -> usize {
        (rep * self.sites.len() + site) * self.n_vars + var
    }

    /// Raw cell value of variable 0 (`NaN` when missing).
    #[inline]
    pub fn raw(&self, rep: usize, site: usize) -> f64 {
        self.values[self.index(rep, site, 0)]
    }

    /// Raw cell value of variable `var` (`NaN` when missing).
    #[inline]
    pub fn raw_var(&self, rep: usize, site: usize, var: usize) -> f64 {
        self.values[self.index(rep, site, var)]
    }

    /// Observed value of variable 0, `None` when missing.
    pub fn get(&self, rep: usize, site: usize) -> Option<f64> {
        self.get_var(rep, site, 0)
    }

    pub fn get_var(&self, rep: usize, site: usize, var: usize) -> Option<f64> {
        let v = self.raw_var(rep, site, var);
        (!v.is_nan()).then_some(v)
    }

    /// Observed values of one site/variable column, in replication order.
    pub fn column(&self, site: usize, var: usize) -> Vec<f64> {
        (0..self.n_reps())
            .filter_map(|r| self.get_var(r, site, var))
            .collect()
    }

    /// Single-variable view of variable `var`.
    pub fn variable(&self, var: usize) -> Result<Self> {
        if var >= self.n_vars {
            return Err(invalid(format!("variable index {var} out of range")));
        }
        let values = (0..self.n_reps())
            .flat_map(|r| (0..self.n_sites()).map(move |s| (r, s)))
            .map(|(r, s)| self.raw_var(r, s, var))
            .collect();
        Self::from_parts(self.sites.clone(), self.rep_ids.clone(), 1, None, values)
    }

    /// Copy of this dataset with each observed cell replaced by
    /// `f(rep, site, var, value)`; missing cells stay missing.
    pub fn map_cells<F>(&self, f: F) -> Self
    where
        F: Fn(usize, usize, usize, f64) -> f64,
    {
        let mut values = self.values.clone();
        for r in 0..self.n_reps() {
            for s in 0..self.n_sites() {
                for v in 0..self.n_vars {
                    let i = self.index(r, s, v);
                    if !values[i].is_nan() {
                        values[i] = f(r, s, v, values[i]);
                    }
                }
            }
        }
        Self { values, ..self.clone() }
    }

    /// Copy of this dataset with whole site/variable columns replaced.
    ///
    /// `columns[site * n_vars + var]` must hold one entry per replication.
    pub fn with_columns(&self, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != self.n_sites() * self.n_vars {
            return Err(invalid("one column per site and variable required"));
        }
        let mut values = self.values.clone();
        for s in 0..self.n_sites() {
            for v in 0..self.n_vars {
                let col = &columns[s * self.n_vars + v];
                if col.len() != self.n_reps() {
                    return Err(invalid("column length differs from replication count"));
                }
                for (r, &x) in col.iter().enumerate() {
                    let i = self.index(r, s, v);
                    values[i] = x;
                }
            }
        }
        Ok(Self { values, ..self.clone() })
    }

    /// Site index by id.
    pub fn site_index(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Deserialize)]
struct SiteRecord {
    site_id: String,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct ObsRecord {
    rep_id: String,
    site_id: String,
    value: String,
}

fn parse_value(raw: &str) -> Result<f64> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    t.parse::<f64>()
        .map_err(|_| Error::Dataset(format!("unparsable observation value {t:?}")))
}

/// Read a site table (`site_id,x,y`).
pub fn read_sites<R: Read>(source: R) -> Result<Vec<Site>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut sites = Vec::new();
    for rec in rdr.deserialize::<SiteRecord>() {
        let rec = rec?;
        sites.push(Site::new(rec.site_id, rec.x, rec.y));
    }
    if sites.is_empty() {
        return Err(Error::Dataset("empty site table".into()));
    }
    Ok(sites)
}

/// Assemble a dataset from a site table and a long-format observation table
/// (`rep_id,site_id,value`).
///
/// Replications are ordered by `rep_id` (numerically when every id is an
/// integer, lexicographically otherwise); sites keep the site-table order.
/// Site/replication combinations without a row are missing cells.
pub fn load_dataset<R1: Read, R2: Read>(sites_src: R1, obs_src: R2) -> Result<SpatialDataset> {
    let sites = read_sites(sites_src)?;
    let site_index: HashMap<&str, usize> =
        sites.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    if site_index.len() != sites.len() {
        return Err(Error::Dataset("duplicate site id in site table".into()));
    }

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(obs_src);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<ObsRecord>() {
        let rec = rec?;
        let Some(&s) = site_index.get(rec.site_id.as_str()) else {
            return Err(Error::Dataset(format!("unknown site {:?}", rec.site_id)));
        };
        rows.push((rec.rep_id, s, parse_value(&rec.value)?));
    }
    if rows.is_empty() {
        return Err(Error::Dataset("empty observation table".into()));
    }

    let mut rep_ids: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    let numeric: Option<Vec<i64>> = rep_ids.iter().map(|r| r.parse::<i64>().ok()).collect();
    if numeric.is_some() {
        rep_ids.sort_by_key(|r| r.parse::<i64>().unwrap_or(i64::MAX));
    } else {
        rep_ids.sort();
    }
    rep_ids.dedup();
    let rep_index: HashMap<&str, usize> =
        rep_ids.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();

    let n_sites = sites.len();
    let mut values = vec![f64::NAN; rep_ids.len() * n_sites];
    let mut filled = vec![false; values.len()];
    for (rep, s, v) in &rows {
        let idx = rep_index[rep.as_str()] * n_sites + s;
        if filled[idx] {
            return Err(Error::Dataset(format!(
                "duplicate observation for rep {rep} site {}",
                sites[*s].id
            )));
        }
        filled[idx] = true;
        values[idx] = *v;
    }
    SpatialDataset::from_parts(sites, rep_ids, 1, None, values)
}

/// [`load_dataset`] from file paths.
pub fn load_dataset_paths(sites: impl AsRef<Path>, obs: impl AsRef<Path>) -> Result<SpatialDataset> {
    let s = std::fs::File::open(sites.as_ref())?;
    let o = std::fs::File::open(obs.as_ref())?;
    load_dataset(s, o)
}

/// Unordered site pairs grouped by distance class.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBins {
    edges: Vec<f64>,
    pairs_per_bin: Vec<Vec<(usize, usize)>>,
    discarded: usize,
}

impl DistanceBins {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.pairs_per_bin.len()
    }

    pub fn pairs(&self, bin: usize) -> &[(usize, usize)] {
        &self.pairs_per_bin[bin]
    }

    pub fn pairs_per_bin(&self) -> &[Vec<(usize, usize)>] {
        &self.pairs_per_bin
    }

    /// Pairs whose distance fell outside `[edges[0], edges[last])`.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Midpoints of the bin intervals.
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total_pairs(&self) -> usize {
        self.pairs_per_bin.iter().map(Vec::len).sum()
    }
}

/// Check a list of bin edges: at least two, finite, non-negative, strictly increasing.
pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid("at least two bin edges are required"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges[0] < 0.0 {
        return Err(invalid("bin edges must be finite and non-negative"));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("bin edges must be strictly increasing"));
    }
    Ok(())
}

/// Assign every unordered site pair `(i, j)`, `i < j`, to the half-open bin
/// `[edges[k], edges[k+1])` containing its Euclidean distance.
pub fn bin_pairs(dataset: &SpatialDataset, edges: &[f64]) -> Result<DistanceBins> {
    bin_sites(dataset.sites(), edges)
}

/// [`bin_pairs`] on a bare site list.
pub fn bin_sites(sites: &[Site], edges: &[f64]) -> Result<DistanceBins> {
    validate_edges(edges)?;
    let mut pairs_per_bin = vec![Vec::new(); edges.len() - 1];
    let mut discarded = 0;
    let last = edges[edges.len() - 1];
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            let d = sites[i].distance(&sites[j]);
            if d < edges[0] || d >= last {
                discarded += 1;
                continue;
            }
            // first edge strictly greater than d, minus one
            let k = edges.partition_point(|&e| e <= d) - 1;
            pairs_per_bin[k].push((i, j));
        }
    }
    Ok(DistanceBins { edges: edges.to_vec(), pairs_per_bin, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_sites(xs: &[f64]) -> Vec<Site> {
        xs.iter().enumerate().map(|(i, &x)| Site::new(format!("s{i}"), x, 0.0)).collect()
    }

    #[test]
    fn loads_long_format() {
        let sites = "site_id,x,y\nA,0,0\nB,1,0\n";
        let obs = "rep_id,site_id,value\n2,A,3\n1,A,1\n1,B,2\n3,B,6\n2,B,4\n3,A,5\n";
        let ds = load_dataset(sites.as_bytes(), obs.as_bytes()).unwrap();
        assert_eq!((ds.n_reps(), ds.n_sites()), (3, 2));
        assert_eq!(ds.get(0, 0), Some(1.0));
        assert_eq!(ds.get(1, 1), Some(4.0));
        assert_eq!(ds.get(2, 0), Some(5.0));
    }

    #[test]
    fn numeric_rep_ids_sort_numerically() {
        let sites = "site_id,x,y\nA,0,0\n";
        let obs = "rep_id,site_id,value\n10,A,10\n9,A,9\n";
        let ds = load_dataset(sites.as_bytes(), obs.as_bytes()).unwrap();
        assert_eq!(ds.rep_ids(), &["9".to_string(), "10".to_string()]);
    }

    #[test]
    fn rejects_unknown_site() {
        let sites = "site_id,x,y\nA,0,0\n";
        let obs = "rep_id,site_id,value\n1,Z9,1\n";
        let err = load_dataset(sites.as_bytes(), obs.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown site"), "{err}");
    }

    #[test]
    fn rejects_duplicate_observation() {
        let sites = "site_id,x,y\nA,0,0\n";
        let obs = "rep_id,site_id,value\n1,A,1\n1,A,2\n";
        let err = load_dataset(sites.as_bytes(), obs.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate observation"), "{err}");
    }

    #[test]
    fn rejects_empty_tables() {
        assert!(load_dataset("site_id,x,y\n".as_bytes(), "rep_id,site_id,value\n1,A,1\n".as_bytes()).is_err());
        assert!(load_dataset("site_id,x,y\nA,0,0\n".as_bytes(), "rep_id,site_id,value\n".as_bytes()).is_err());
    }

    #[test]
    fn absent_rows_become_missing() {
        let sites = "site_id,x,y\nA,0,0\nB,1,0\n";
        let obs = "rep_id,site_id,value\n1,A,1\n1,B,NA\n2,A,3\n";
        let ds = load_dataset(sites.as_bytes(), obs.as_bytes()).unwrap();
        assert_eq!(ds.get(0, 1), None);
        assert_eq!(ds.get(1, 1), None);
        assert_eq!(ds.column(0, 0), vec![1.0, 3.0]);
    }

    #[test]
    fn bins_three_sites() {
        let sites = line_sites(&[0.0, 1.0, 3.0]);
        let bins = bin_sites(&sites, &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(bins.pairs(0), &[(0, 1)]);
        assert_eq!(bins.pairs(1), &[(0, 2), (1, 2)]);
        assert_eq!(bins.discarded(), 0);
        assert_eq!(bins.centers(), vec![1.0, 3.0]);
    }

    #[test]
    fn single_site_has_empty_bins() {
        let bins = bin_sites(&line_sites(&[0.0]), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(bins.total_pairs(), 0);
    }

    #[test]
    fn distance_on_last_edge_is_discarded() {
        let bins = bin_sites(&line_sites(&[0.0, 2.0]), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(bins.total_pairs(), 0);
        assert_eq!(bins.discarded(), 1);
    }

    #[test]
    fn rejects_bad_edges() {
        let s = line_sites(&[0.0, 1.0]);
        assert!(bin_sites(&s, &[0.0, 2.0, 1.0]).is_err());
        assert!(bin_sites(&s, &[1.0, 1.0]).is_err());
        assert!(bin_sites(&s, &[-1.0, 1.0]).is_err());
        assert!(bin_sites(&s, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn every_pair_binned_once_or_discarded(
            coords in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..25),
            mut cuts in proptest::collection::vec(0.1f64..12.0, 1..6),
        ) {
            let sites: Vec<Site> = coords.iter().enumerate()
                .map(|(i, &(x, y))| Site::new(format!("s{i}"), x, y)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut edges = vec![0.0];
            edges.extend(cuts);
            let bins = bin_sites(&sites, &edges).unwrap();
            let n = sites.len();
            prop_assert_eq!(bins.total_pairs() + bins.discarded(), n * (n - 1) / 2);
            for (k, pairs) in bins.pairs_per_bin().iter().enumerate() {
                prop_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
                for &(i, j) in pairs {
                    let d = sites[i].distance(&sites[j]);
                    prop_assert!(i < j && edges[k] <= d && d < edges[k + 1]);
                }
            }
        }
    }
}
