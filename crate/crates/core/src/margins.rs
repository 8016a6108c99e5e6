//! GEV margins: evaluation, PWM fitting and transforms to the unit-Fréchet
//! and pseudo-uniform scales.

use serde::{Deserialize, Serialize};

use crate::dataset::SpatialDataset;
use crate::error::{domain, invalid, Error, Result};
use crate::numeric::{gamma, EULER_GAMMA};
use crate::par;

/// Shapes closer to zero than this use the Gumbel (ξ = 0) formulas.
const XI_ZERO: f64 = 1e-15;

/// Shape range returned by [`fit_gev`]; estimates outside are clamped.
pub const XI_MIN: f64 = -0.5;
pub const XI_MAX: f64 = 0.95;

const MIN_FIT_SAMPLE: usize = 20;

/// Location, scale and shape of a generalized extreme-value margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(mu.is_finite() && xi.is_finite()) {
            return Err(invalid("GEV location and shape must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("GEV scale must be positive, got {sigma}")));
        }
        Ok(Self { mu, sigma, xi })
    }

    pub const fn standard_gumbel() -> Self {
        Self { mu: 0.0, sigma: 1.0, xi: 0.0 }
    }

    pub const fn unit_frechet() -> Self {
        Self { mu: 1.0, sigma: 1.0, xi: 1.0 }
    }

    /// Reversed standard exponential, `G(z) = e^z` for `z < 0`.
    pub const fn standard_weibull() -> Self {
        Self { mu: -1.0, sigma: 1.0, xi: -1.0 }
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < XI_ZERO
    }

    /// `G(z)`; 0 left of the support (ξ > 0), 1 right of it (ξ < 0).
    pub fn cdf(&self, z: f64) -> f64 {
        let s = (z - self.mu) / self.sigma;
        if self.is_gumbel() {
            return (-(-s).exp()).exp();
        }
        let t = 1.0 + self.xi * s;
        if t <= 0.0 {
            return if self.xi > 0.0 { 0.0 } else { 1.0 };
        }
        (-(-(self.xi * s).ln_1p() / self.xi).exp()).exp()
    }

    /// Inverse of [`GevParams::cdf`] on `(0, 1)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid(format!("quantile level must lie in (0,1), got {q}")));
        }
        Ok(self.quantile_unchecked(q))
    }

    pub(crate) fn quantile_unchecked(&self, q: f64) -> f64 {
        let log_y = (-q.ln()).ln();
        if self.is_gumbel() {
            self.mu - self.sigma * log_y
        } else {
            self.mu + self.sigma * (-self.xi * log_y).exp_m1() / self.xi
        }
    }

    /// Mean of the distribution, `μ + σ(Γ(1−ξ) − 1)/ξ`; infinite for ξ ≥ 1.
    pub fn mean(&self) -> f64 {
        if self.xi >= 1.0 {
            f64::INFINITY
        } else if self.is_gumbel() {
            self.mu + self.sigma * EULER_GAMMA
        } else {
            self.mu + self.sigma * (gamma(1.0 - self.xi) - 1.0) / self.xi
        }
    }

    /// `u_β(z) = [1 + ξ(z−μ)/σ]^{1/ξ}` (`exp((z−μ)/σ)` for ξ = 0), zero off the support.
    ///
    /// This equals `−1/log G(z)`, the unit-Fréchet transform of `z`.
    pub fn u_beta(&self, z: f64) -> f64 {
        let s = (z - self.mu) / self.sigma;
        if self.is_gumbel() {
            return s.exp();
        }
        if 1.0 + self.xi * s <= 0.0 {
            return 0.0;
        }
        ((self.xi * s).ln_1p() / self.xi).exp()
    }

    /// Unit-Fréchet transform of one observation; `None` outside the support.
    pub fn to_unit_frechet(&self, z: f64) -> Option<f64> {
        let y = self.u_beta(z);
        (y > 0.0 && y.is_finite()).then_some(y)
    }
}

/// Result of [`fit_gev`]; `clamped` is set when the shape hit a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevFit {
    pub params: GevParams,
    pub clamped: bool,
}

/// Sample L-moments `(l1, l2, l3)` from unbiased probability-weighted moments.
fn sample_l_moments(sorted: &[f64]) -> (f64, f64, f64) {
    let n = sorted.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &x) in sorted.iter().enumerate() {
        let i = i as f64;
        b0 += x;
        b1 += x * i / (n - 1.0);
        b2 += x * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    (b0, 2.0 * b1 - b0, 6.0 * b2 - 6.0 * b1 + b0)
}

/// `(1 − 3^{−k}) / (1 − 2^{−k})`, the L-skewness map in Hosking's `k = −ξ`.
fn skew_ratio(k: f64) -> f64 {
    if k == 0.0 {
        return 3f64.ln() / 2f64.ln();
    }
    (-k * 3f64.ln()).exp_m1() / (-k * 2f64.ln()).exp_m1()
}

/// `(1 − Γ(1+k)) / k`, with a series near zero.
fn gamma_slope(k: f64) -> f64 {
    if k.abs() < 1e-5 {
        let c2 = 0.5 * EULER_GAMMA * EULER_GAMMA + std::f64::consts::PI.powi(2) / 12.0;
        EULER_GAMMA - c2 * k
    } else {
        (1.0 - gamma(1.0 + k)) / k
    }
}

/// Fit a GEV by probability-weighted moments (L-moments).
///
/// The shape equation is solved exactly by bisection; the returned shape is
/// clamped to `[XI_MIN, XI_MAX]` and flagged when clamped.
pub fn fit_gev(sample: &[f64]) -> Result<GevFit> {
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(invalid("sample contains non-finite values"));
    }
    if sample.len() < MIN_FIT_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "insufficient sample: {} values, need at least {MIN_FIT_SAMPLE}",
            sample.len()
        )));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(domain("degenerate sample: all values are equal"));
    }
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < MIN_FIT_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "insufficient sample: {} distinct values, need at least {MIN_FIT_SAMPLE}",
            distinct.len()
        )));
    }

    let (l1, l2, l3) = sample_l_moments(&sorted);
    if !(l2 > 0.0) {
        return Err(domain("degenerate sample: zero L-scale"));
    }
    let target = (l3 / l2 + 3.0) / 2.0;

    // skew_ratio is decreasing in k; k = -xi
    let (k_lo, k_hi) = (-XI_MAX, -XI_MIN);
    let (k, clamped) = if target >= skew_ratio(k_lo) {
        (k_lo, true)
    } else if target <= skew_ratio(k_hi) {
        (k_hi, true)
    } else {
        let (mut a, mut b) = (k_lo, k_hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            if skew_ratio(m) > target {
                a = m;
            } else {
                b = m;
            }
        }
        (0.5 * (a + b), false)
    };

    let sigma = if k == 0.0 {
        l2 / 2f64.ln()
    } else {
        l2 * k / ((-(-k * 2f64.ln()).exp_m1()) * gamma(1.0 + k))
    };
    let mu = l1 - sigma * gamma_slope(k);
    let xi = if k == 0.0 { 0.0 } else { -k };
    if clamped {
        log::warn!("GEV shape estimate clamped to {xi}");
    }
    Ok(GevFit { params: GevParams::new(mu, sigma, xi)?, clamped })
}

/// Fit one GEV per site/variable column, in `site * n_vars + var` order.
pub fn fit_margins(dataset: &SpatialDataset) -> Result<Vec<GevFit>> {
    let n_vars = dataset.n_vars();
    par::map_indexed(dataset.n_sites() * n_vars, |c| {
        fit_gev(&dataset.column(c / n_vars, c % n_vars))
            .map_err(|e| annotate(e, &dataset.sites()[c / n_vars].id))
    })
    .into_iter()
    .collect()
}

fn annotate(e: Error, site: &str) -> Error {
    match e {
        Error::InsufficientData(m) => Error::InsufficientData(format!("site {site}: {m}")),
        Error::Domain(m) => Error::Domain(format!("site {site}: {m}")),
        other => other,
    }
}

/// Transform every observed cell to the unit-Fréchet scale, `−1/log G_s(y)`.
///
/// `fits` holds one parameter set per column (`site * n_vars + var`). Cells
/// outside the fitted support are reported together in
/// [`Error::OutsideSupport`].
pub fn to_unit_frechet(dataset: &SpatialDataset, fits: &[GevParams]) -> Result<SpatialDataset> {
    let n_vars = dataset.n_vars();
    if fits.len() != dataset.n_sites() * n_vars {
        return Err(invalid(format!(
            "expected {} margin fits, got {}",
            dataset.n_sites() * n_vars,
            fits.len()
        )));
    }
    let mut bad = Vec::new();
    for r in 0..dataset.n_reps() {
        for s in 0..dataset.n_sites() {
            for v in 0..n_vars {
                if let Some(y) = dataset.get_var(r, s, v) {
                    if fits[s * n_vars + v].to_unit_frechet(y).is_none() {
                        bad.push((r, s));
                    }
                }
            }
        }
    }
    if !bad.is_empty() {
        bad.dedup();
        return Err(Error::OutsideSupport { cells: bad });
    }
    Ok(dataset.map_cells(|_, s, v, y| fits[s * n_vars + v].u_beta(y)))
}

/// Unit-Fréchet values to the standard Gumbel scale (`log z`).
pub fn frechet_to_gumbel(dataset: &SpatialDataset) -> SpatialDataset {
    dataset.map_cells(|_, _, _, z| z.ln())
}

/// Unit-Fréchet values to the standard (reversed exponential) Weibull scale (`−1/z`).
pub fn frechet_to_weibull(dataset: &SpatialDataset) -> SpatialDataset {
    dataset.map_cells(|_, _, _, z| -1.0 / z)
}

/// Unit-Fréchet values to uniforms (`exp(−1/z)`).
pub fn frechet_to_uniform(dataset: &SpatialDataset) -> SpatialDataset {
    dataset.map_cells(|_, _, _, z| (-1.0 / z).exp())
}

/// Average ranks of `values` (1-based), ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank transform per column: `rank / (n + 1)` with average ranks for ties,
/// `n` being the number of observed cells in the column.
pub fn pseudo_observations(dataset: &SpatialDataset) -> Result<SpatialDataset> {
    if dataset.n_reps() < 2 {
        return Err(Error::InsufficientData(
            "pseudo-observations need at least 2 replications".into(),
        ));
    }
    let n_vars = dataset.n_vars();
    let columns = par::map_indexed(dataset.n_sites() * n_vars, |c| {
        let (s, v) = (c / n_vars, c % n_vars);
        let observed: Vec<(usize, f64)> = (0..dataset.n_reps())
            .filter_map(|r| dataset.get_var(r, s, v).map(|x| (r, x)))
            .collect();
        let vals: Vec<f64> = observed.iter().map(|o| o.1).collect();
        let ranks = average_ranks(&vals);
        let denom = vals.len() as f64 + 1.0;
        let mut col = vec![f64::NAN; dataset.n_reps()];
        for ((r, _), rank) in observed.iter().zip(ranks) {
            col[*r] = rank / denom;
        }
        col
    });
    dataset.with_columns(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Site;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const E_INV: f64 = 0.36787944117144233;

    #[test]
    fn cdf_examples() {
        assert!((GevParams::new(0.0, 1.0, 0.0).unwrap().cdf(0.0) - E_INV).abs() < 1e-15);
        assert!((GevParams::unit_frechet().cdf(1.0) - E_INV).abs() < 1e-15);
        assert_eq!(GevParams::new(0.0, 1.0, 0.5).unwrap().cdf(-3.0), 0.0);
        assert_eq!(GevParams::new(0.0, 1.0, -0.5).unwrap().cdf(3.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        let g = GevParams::standard_gumbel();
        assert!(g.quantile(E_INV).unwrap().abs() < 1e-15);
        assert!((GevParams::unit_frechet().quantile(E_INV).unwrap() - 1.0).abs() < 1e-15);
        assert!(g.quantile(0.0).is_err());
        assert!(g.quantile(1.0).is_err());
        assert!(GevParams::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn quantile_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [
            GevParams::new(2.0, 3.0, 0.3).unwrap(),
            GevParams::new(-1.0, 0.5, -0.4).unwrap(),
            GevParams::standard_gumbel(),
        ] {
            for _ in 0..100 {
                let q: f64 = rng.random_range(0.01..0.99);
                let back = p.cdf(p.quantile(q).unwrap());
                assert!((back - q).abs() <= 1e-12 * q, "{p:?} q={q} back={back}");
            }
        }
    }

    #[test]
    fn cdf_is_monotone_on_grid() {
        for &xi in &[-0.8, -0.2, 0.0, 0.2, 1.0, 2.5] {
            let p = GevParams::new(0.5, 2.0, xi).unwrap();
            let mut prev = 0.0;
            for i in 0..1000 {
                let z = -20.0 + 40.0 * i as f64 / 999.0;
                let c = p.cdf(z);
                assert!((0.0..=1.0).contains(&c) && c >= prev, "xi={xi} z={z}");
                prev = c;
            }
        }
    }

    fn gumbel_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| -(-rng.random::<f64>().ln()).ln()).collect()
    }

    #[test]
    fn fit_recovers_gumbel() {
        let fit = fit_gev(&gumbel_sample(10_000, 7)).unwrap();
        let p = fit.params;
        assert!(p.mu.abs() <= 0.05, "{p:?}");
        assert!((p.sigma - 1.0).abs() <= 0.05, "{p:?}");
        assert!(p.xi.abs() <= 0.05, "{p:?}");
        assert!(!fit.clamped);
    }

    #[test]
    fn fit_recovers_frechet_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = GevParams::new(10.0, 2.0, 0.3).unwrap();
        let s: Vec<f64> = (0..20_000).map(|_| truth.quantile_unchecked(rng.random())).collect();
        let p = fit_gev(&s).unwrap().params;
        assert!((p.xi - 0.3).abs() < 0.05 && (p.mu - 10.0).abs() < 0.1, "{p:?}");
    }

    #[test]
    fn fit_errors() {
        let err = fit_gev(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap_err();
        assert!(err.to_string().contains("insufficient sample"));
        let err = fit_gev(&[2.5; 50]).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn fit_clamps_heavy_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = GevParams::new(0.0, 1.0, 1.5).unwrap();
        let s: Vec<f64> = (0..5000).map(|_| truth.quantile_unchecked(rng.random())).collect();
        let fit = fit_gev(&s).unwrap();
        assert!(fit.clamped);
        assert_eq!(fit.params.xi, XI_MAX);
    }

    #[test]
    fn fit_is_location_scale_equivariant() {
        let s = gumbel_sample(500, 21);
        let base = fit_gev(&s).unwrap().params;
        for &(a, b) in &[(2.5, -3.0), (0.1, 100.0), (7.0, 0.0)] {
            let t: Vec<f64> = s.iter().map(|x| a * x + b).collect();
            let p = fit_gev(&t).unwrap().params;
            assert!((p.mu - (a * base.mu + b)).abs() <= 1e-9 * (1.0 + p.mu.abs()));
            assert!((p.sigma - a * base.sigma).abs() <= 1e-9 * p.sigma);
            assert!((p.xi - base.xi).abs() <= 1e-9);
        }
    }

    fn single_site(values: Vec<f64>) -> SpatialDataset {
        SpatialDataset::from_rows(vec![Site::new("a", 0.0, 0.0)], values.into_iter().map(|v| vec![v]).collect())
            .unwrap()
    }

    #[test]
    fn unit_frechet_examples() {
        let p = GevParams::standard_gumbel();
        // G(y) = e^{-1} at y = 0, G(y) = e^{-1/2} at y = ln 2
        let ds = single_site(vec![0.0, 2f64.ln()]);
        let f = to_unit_frechet(&ds, &[p]).unwrap();
        assert!((f.get(0, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((f.get(1, 0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_frechet_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..200).map(|_| -1.0 / rng.random::<f64>().ln()).collect();
        let ds = single_site(vals.clone());
        let f = to_unit_frechet(&ds, &[GevParams::unit_frechet()]).unwrap();
        for (r, v) in vals.iter().enumerate() {
            assert!((f.get(r, 0).unwrap() - v).abs() <= 1e-9 * v);
        }
    }

    #[test]
    fn unit_frechet_reports_offending_cells() {
        let ds = single_site(vec![1.0, -5.0, 2.0, -7.0]);
        let p = GevParams::new(0.0, 1.0, 0.5).unwrap();
        match to_unit_frechet(&ds, &[p]) {
            Err(Error::OutsideSupport { cells }) => assert_eq!(cells, vec![(1, 0), (3, 0)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pseudo_observation_examples() {
        let p = pseudo_observations(&single_site(vec![3.0, 1.0, 2.0])).unwrap();
        assert_eq!(p.column(0, 0), vec![0.75, 0.25, 0.5]);
        let p = pseudo_observations(&single_site(vec![1.0, 1.0])).unwrap();
        assert_eq!(p.column(0, 0), vec![0.5, 0.5]);
        assert!(pseudo_observations(&single_site(vec![1.0])).is_err());
    }

    proptest! {
        #[test]
        fn frechet_transform_is_monotone(
            mut ys in proptest::collection::vec(-1.5f64..30.0, 2..60),
            xi in -0.3f64..0.9,
        ) {
            let p = GevParams::new(0.5, 1.3, xi).unwrap();
            ys.retain(|&y| p.to_unit_frechet(y).is_some());
            prop_assume!(ys.len() >= 2);
            let ds = single_site(ys.clone());
            let f = to_unit_frechet(&ds, &[p]).unwrap().column(0, 0);
            for i in 0..ys.len() {
                for j in 0..ys.len() {
                    if ys[i] < ys[j] {
                        prop_assert!(f[i] < f[j] || (f[i] == f[j] && (ys[j] - ys[i]).abs() < 1e-12));
                    }
                }
                prop_assert!(f[i] > 0.0);
            }
        }

        #[test]
        fn pseudo_observations_in_open_unit_interval(
            ys in proptest::collection::vec(-100.0f64..100.0, 2..80),
        ) {
            let p = pseudo_observations(&single_site(ys)).unwrap();
            prop_assert!(p.column(0, 0).iter().all(|&u| u > 0.0 && u < 1.0));
        }
    }
}
