//! Madograms, extremal coefficients and the copula (co)variogram.
//!
//! The madogram `M(h) = E|Z(x+h) − Z(x)| / 2` of a max-stable field with a
//! common GEV margin determines the pairwise extremal coefficient `θ(h)`.
//! Written through the copula `C_h` of the pair, `M(h) = ∫ F⁻¹(u) dC_h(u,u) − μ`,
//! which gives the closed forms used by [`copula_madogram`] and
//! [`theta_from_madogram`].

use serde::{Deserialize, Serialize};

use crate::copulas::CopulaModel;
use crate::dataset::{DistanceBins, SpatialDataset};
use crate::error::{domain, invalid, Error, Result};
use crate::margins::GevParams;
use crate::numeric::{gamma, logistic, logit};
use crate::par;

/// What a [`DependenceCurve`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Madogram,
    Theta,
    Variogram,
    Covariogram,
    Extremogram,
    CrossExtremogram,
}

/// Distance-binned estimates. Bins without usable pairs carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceCurve {
    pub kind: CurveKind,
    pub bin_centers: Vec<f64>,
    pub estimates: Vec<Option<f64>>,
    pub n_pairs: Vec<usize>,
    pub clamped: Vec<bool>,
}

/// One bin of a curve, as emitted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bin_center: f64,
    pub estimate: Option<f64>,
    pub n_pairs: usize,
    pub clamped: bool,
    /// Reserved; always `None`.
    pub stderr: Option<f64>,
}

impl DependenceCurve {
    pub fn len(&self) -> usize {
        self.bin_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin_centers.is_empty()
    }

    pub fn points(&self) -> Vec<CurvePoint> {
        (0..self.len())
            .map(|k| CurvePoint {
                bin_center: self.bin_centers[k],
                estimate: self.estimates[k],
                n_pairs: self.n_pairs[k],
                clamped: self.clamped[k],
                stderr: None,
            })
            .collect()
    }
}

/// Empirical madogram per distance bin: the mean of `|z_i − z_j| / 2` over the
/// pairs of the bin and the replications where both sites are observed.
///
/// The data must already share a common margin.
pub fn empirical_madogram(dataset: &SpatialDataset, bins: &DistanceBins) -> Result<DependenceCurve> {
    if dataset.n_reps() < 2 {
        return Err(Error::InsufficientData("madogram needs at least 2 replications".into()));
    }
    if bins.total_pairs() == 0 {
        return Err(Error::InsufficientData("every distance bin is empty".into()));
    }
    let estimates = par::map_slice(bins.pairs_per_bin(), |pairs| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(i, j) in pairs {
            for r in 0..dataset.n_reps() {
                let d = (dataset.raw(r, i) - dataset.raw(r, j)).abs();
                if !d.is_nan() {
                    sum += 0.5 * d;
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    });
    Ok(DependenceCurve {
        kind: CurveKind::Madogram,
        bin_centers: bins.centers(),
        n_pairs: bins.pairs_per_bin().iter().map(Vec::len).collect(),
        clamped: vec![false; estimates.len()],
        estimates,
    })
}

/// Mesh for the one-dimensional integrals over `[eps, 1 − eps]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Truncation of the unit interval at both ends.
    pub eps: f64,
    /// Number of cells (uniform in logit scale).
    pub cells: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { eps: 1e-6, cells: 10_000 }
    }
}

impl QuadratureOptions {
    fn validate(&self, min_cells: usize) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(invalid("eps must lie in (0, 0.5)"));
        }
        if self.cells < min_cells {
            return Err(invalid(format!("at least {min_cells} cells required")));
        }
        Ok(())
    }

    /// Cell boundaries in `u`, uniform in `logit(u)`.
    fn edges(&self) -> Vec<f64> {
        let (t0, t1) = (logit(self.eps), logit(1.0 - self.eps));
        (0..=self.cells)
            .map(|k| logistic(t0 + (t1 - t0) * k as f64 / self.cells as f64))
            .collect()
    }

    /// Midpoints (in logit scale) and `du` widths.
    fn nodes(&self) -> Vec<(f64, f64)> {
        let (t0, t1) = (logit(self.eps), logit(1.0 - self.eps));
        let dt = (t1 - t0) / self.cells as f64;
        (0..self.cells)
            .map(|k| {
                let u = logistic(t0 + (k as f64 + 0.5) * dt);
                (u, u * (1.0 - u) * dt)
            })
            .collect()
    }
}

/// Result of [`copula_madogram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaMadogram {
    pub value: f64,
    /// Diagonal mass outside `[eps, 1 − eps]`; approximated with the endpoint quantiles.
    pub truncated_mass: f64,
}

/// Copula madogram `∫₀¹ F⁻¹(u) dD(u) − μ`, `D(u) = C(u, u)`.
///
/// Stieltjes sum over cells of `[eps, 1 − eps]` (midpoint quantile times the
/// diagonal increment); the two tails use the quantile at the truncation
/// points. The comonotone copula gives exactly 0.
pub fn copula_madogram(
    model: &CopulaModel,
    quantile: &(dyn Fn(f64) -> f64 + Sync),
    mean: f64,
    opts: QuadratureOptions,
) -> Result<CopulaMadogram> {
    opts.validate(10_000)?;
    if !mean.is_finite() {
        return Err(domain("margin mean must be finite"));
    }
    if matches!(model, CopulaModel::Comonotone) {
        return Ok(CopulaMadogram { value: 0.0, truncated_mass: 0.0 });
    }
    let edges = opts.edges();
    let diag: Vec<f64> = edges.iter().map(|&u| model.diag(u)).collect();
    let (lo_q, hi_q) = (quantile(opts.eps), quantile(1.0 - opts.eps));
    if !lo_q.is_finite() || !hi_q.is_finite() {
        return Err(domain("quantile function is not finite on the truncated range"));
    }
    let mut sum = 0.0;
    for k in 0..opts.cells {
        let mid = logistic(0.5 * (logit(edges[k]) + logit(edges[k + 1])));
        let q = quantile(mid);
        if !q.is_finite() {
            return Err(domain(format!("quantile function not finite at {mid}")));
        }
        sum += q * (diag[k + 1] - diag[k]);
    }
    let lower_mass = diag[0];
    let upper_mass = 1.0 - diag[opts.cells];
    sum += lo_q * lower_mass + hi_q * upper_mass;
    Ok(CopulaMadogram { value: sum - mean, truncated_mass: lower_mass + upper_mass })
}

/// Margin under which a madogram is converted to an extremal coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MadogramMargin {
    Gev(GevParams),
    /// `exp(−e^{−z})`; `θ = exp(M)`.
    StandardGumbel,
    /// `e^{z}`, `z < 0`; `θ = 1 / (1 − M)`.
    StandardWeibull,
}

/// Extremal coefficient with its clamp flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub clamped: bool,
}

fn clamp_theta(raw: f64) -> ThetaEstimate {
    let theta = raw.clamp(1.0, 2.0);
    ThetaEstimate { theta, clamped: theta != raw }
}

/// Pairwise extremal coefficient from a madogram value.
///
/// For a GEV margin with `ξ ≠ 0`, `θ = u_β(μ + M/Γ(1−ξ))`; for `ξ = 0`,
/// `θ = exp(M/σ)`. The result is clamped to `[1, 2]`.
pub fn theta_from_madogram(madogram: f64, margin: MadogramMargin) -> Result<ThetaEstimate> {
    if !madogram.is_finite() {
        return Err(invalid("madogram must be finite"));
    }
    let raw = match margin {
        MadogramMargin::StandardGumbel => madogram.exp(),
        MadogramMargin::StandardWeibull => {
            if madogram >= 1.0 {
                return Err(domain("Weibull-margin madogram must be < 1"));
            }
            1.0 / (1.0 - madogram)
        }
        MadogramMargin::Gev(p) => {
            if p.xi >= 1.0 {
                return Err(domain("madogram undefined, Γ(1−ξ) diverges for ξ >= 1"));
            }
            if p.xi == 0.0 || p.xi.abs() < 1e-15 {
                (madogram / p.sigma).exp()
            } else {
                p.u_beta(p.mu + madogram / gamma(1.0 - p.xi))
            }
        }
    };
    Ok(clamp_theta(raw))
}

/// Convert a madogram curve into an extremal-coefficient curve.
pub fn theta_curve(madogram: &DependenceCurve, margin: MadogramMargin) -> Result<DependenceCurve> {
    let mut estimates = Vec::with_capacity(madogram.len());
    let mut clamped = Vec::with_capacity(madogram.len());
    for est in &madogram.estimates {
        match est {
            Some(m) => {
                let t = theta_from_madogram(*m, margin)?;
                estimates.push(Some(t.theta));
                clamped.push(t.clamped);
            }
            None => {
                estimates.push(None);
                clamped.push(false);
            }
        }
    }
    Ok(DependenceCurve {
        kind: CurveKind::Theta,
        bin_centers: madogram.bin_centers.clone(),
        n_pairs: madogram.n_pairs.clone(),
        estimates,
        clamped,
    })
}

/// Extremal coefficient read off the diagonal, `θ(p) = log D(p) / log p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaTheta {
    /// Mean of the per-probe values.
    pub theta: f64,
    /// Largest minus smallest per-probe value.
    pub spread: f64,
    /// `spread < 1e−8`: the diagonal is a power of `p`.
    pub extremal: bool,
}

pub const EXTREMAL_SPREAD: f64 = 1e-8;

/// Extremal coefficient of a copula from `P[U ≤ p, V ≤ p] = p^θ` at each probe.
pub fn theta_from_copula(model: &CopulaModel, probes: &[f64]) -> Result<CopulaTheta> {
    if probes.len() < 3 {
        return Err(invalid("at least 3 probes are required"));
    }
    let mut values = Vec::with_capacity(probes.len());
    for &p in probes {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("probe {p} outside (0,1)")));
        }
        let d = model.diag(p);
        if d <= 0.0 {
            return Err(domain(format!("diagonal vanishes at probe {p}")));
        }
        values.push(d.ln() / p.ln());
    }
    let theta = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    Ok(CopulaTheta { theta, spread, extremal: spread < EXTREMAL_SPREAD })
}

/// Default diagonal probes for [`theta_from_copula`].
pub const DEFAULT_THETA_PROBES: [f64; 3] = [0.5, 0.9, 0.99];

/// Extremal coefficient of a `k`-site subset under the symmetric logistic
/// model with dependence parameter `α ≥ 1`: `θ = k^{1/α}`.
///
/// `α = ∞` (complete dependence) is accepted and gives 1.
pub fn theta_m_logistic(alpha: f64, subset_size: usize) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(invalid(format!("logistic alpha must be >= 1, got {alpha}")));
    }
    if subset_size == 0 {
        return Err(invalid("subset size must be at least 1"));
    }
    Ok((subset_size as f64).powf(1.0 / alpha))
}

/// Copula covariogram `∫∫ F_i⁻¹(u) F_j⁻¹(v) c(u,v) du dv − m_i m_j`.
///
/// Tensor midpoint rule on a logit-uniform mesh of `[eps, 1 − eps]²` with
/// `opts.cells` cells per axis. The comonotone copula has no density and is
/// integrated along the diagonal instead.
pub fn copula_covariogram(
    model: &CopulaModel,
    quantile_i: &(dyn Fn(f64) -> f64 + Sync),
    quantile_j: &(dyn Fn(f64) -> f64 + Sync),
    mean_i: f64,
    mean_j: f64,
    opts: QuadratureOptions,
) -> Result<f64> {
    opts.validate(16)?;
    let nodes = opts.nodes();
    let qi: Vec<f64> = nodes.iter().map(|&(u, _)| quantile_i(u)).collect();
    let qj: Vec<f64> = nodes.iter().map(|&(u, _)| quantile_j(u)).collect();
    if qi.iter().chain(&qj).any(|q| !q.is_finite()) {
        return Err(domain("quantile function is not finite on the truncated range"));
    }
    let cross = match model {
        CopulaModel::Comonotone => nodes.iter().zip(qi.iter().zip(&qj)).map(|(n, (a, b))| a * b * n.1).sum(),
        CopulaModel::Empirical(_) => return Err(domain("empirical copula has no density")),
        _ => {
            let rows = par::map_indexed(nodes.len(), |a| {
                let (u, wu) = nodes[a];
                let mut acc = 0.0;
                for (b, &(v, wv)) in nodes.iter().enumerate() {
                    acc += qj[b] * model.density(u, v).unwrap_or(f64::NAN) * wv;
                }
                qi[a] * wu * acc
            });
            let s: f64 = rows.iter().sum();
            if !s.is_finite() {
                return Err(domain("density quadrature produced a non-finite value"));
            }
            s
        }
    };
    Ok(cross - mean_i * mean_j)
}

/// Copula variogram `σ_i² + σ_j² − 2 ĉ` with caller-supplied margin variances.
#[allow(clippy::too_many_arguments)]
pub fn copula_variogram(
    model: &CopulaModel,
    quantile_i: &(dyn Fn(f64) -> f64 + Sync),
    quantile_j: &(dyn Fn(f64) -> f64 + Sync),
    mean_i: f64,
    mean_j: f64,
    var_i: f64,
    var_j: f64,
    opts: QuadratureOptions,
) -> Result<f64> {
    let c = copula_covariogram(model, quantile_i, quantile_j, mean_i, mean_j, opts)?;
    Ok(var_i + var_j - 2.0 * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Site;
    use crate::numeric::EULER_GAMMA;
    use std::f64::consts::LN_2;

    fn two_sites(rows: Vec<Vec<f64>>) -> SpatialDataset {
        SpatialDataset::from_rows(vec![Site::new("a", 0.0, 0.0), Site::new("b", 1.0, 0.0)], rows).unwrap()
    }

    fn gumbel_quantile(u: f64) -> f64 {
        -(-u.ln()).ln()
    }

    #[test]
    fn madogram_hand_computation() {
        let ds = two_sites(vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        let bins = crate::bin_pairs(&ds, &[0.0, 2.0]).unwrap();
        let c = empirical_madogram(&ds, &bins).unwrap();
        assert_eq!(c.estimates, vec![Some(0.75)]);
        assert_eq!(c.n_pairs, vec![1]);
    }

    #[test]
    fn madogram_identical_columns_is_zero() {
        let ds = two_sites((0..10).map(|i| vec![i as f64, i as f64]).collect());
        let bins = crate::bin_pairs(&ds, &[0.0, 0.5, 2.0]).unwrap();
        let c = empirical_madogram(&ds, &bins).unwrap();
        assert_eq!(c.estimates, vec![None, Some(0.0)]);
    }

    #[test]
    fn madogram_skips_missing_and_rejects_empty() {
        let ds = two_sites(vec![vec![0.0, 1.0], vec![f64::NAN, 5.0], vec![3.0, 0.0]]);
        let bins = crate::bin_pairs(&ds, &[0.0, 2.0]).unwrap();
        assert_eq!(empirical_madogram(&ds, &bins).unwrap().estimates, vec![Some(1.0)]);
        let far = crate::bin_pairs(&ds, &[5.0, 6.0]).unwrap();
        assert!(empirical_madogram(&ds, &far).is_err());
    }

    #[test]
    fn copula_madogram_closed_forms() {
        let opts = QuadratureOptions::default();
        let m = copula_madogram(&CopulaModel::Independence, &gumbel_quantile, EULER_GAMMA, opts).unwrap();
        assert!((m.value - LN_2).abs() < 1e-3, "{m:?}");
        for &alpha in &[1.2, 2.0, 5.0] {
            let g = CopulaModel::gumbel(alpha).unwrap();
            let m = copula_madogram(&g, &gumbel_quantile, EULER_GAMMA, opts).unwrap();
            assert!((m.value - LN_2 / alpha).abs() < 1e-3, "alpha={alpha} {m:?}");
        }
        let c = copula_madogram(&CopulaModel::Comonotone, &gumbel_quantile, EULER_GAMMA, opts).unwrap();
        assert_eq!(c.value, 0.0);
        let coarse = QuadratureOptions { cells: 100, ..opts };
        assert!(copula_madogram(&CopulaModel::Independence, &gumbel_quantile, 0.0, coarse).is_err());
    }

    #[test]
    fn theta_from_madogram_examples() {
        let t = theta_from_madogram(LN_2, MadogramMargin::StandardGumbel).unwrap();
        assert!((t.theta - 2.0).abs() < 1e-15 && !t.clamped);
        let t = theta_from_madogram(0.5, MadogramMargin::StandardWeibull).unwrap();
        assert_eq!(t.theta, 2.0);
        let xi = 0.25;
        let m = (2f64.powf(xi) - 1.0) * gamma(1.0 - xi) / xi;
        assert!((m - 0.9274).abs() < 1e-4);
        let p = GevParams::new(0.0, 1.0, xi).unwrap();
        let t = theta_from_madogram(m, MadogramMargin::Gev(p)).unwrap();
        assert!((t.theta - 2.0).abs() < 1e-9, "{t:?}");
        let t = theta_from_madogram(0.0, MadogramMargin::Gev(p)).unwrap();
        assert!((t.theta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn theta_from_madogram_errors_and_clamps() {
        let p = GevParams::unit_frechet();
        assert!(theta_from_madogram(0.5, MadogramMargin::Gev(p)).is_err());
        assert!(theta_from_madogram(1.0, MadogramMargin::StandardWeibull).is_err());
        let t = theta_from_madogram(1.0, MadogramMargin::StandardGumbel).unwrap();
        assert!(t.clamped && t.theta == 2.0);
        let t = theta_from_madogram(-0.1, MadogramMargin::StandardGumbel).unwrap();
        assert!(t.clamped && t.theta == 1.0);
    }

    #[test]
    fn theta_from_copula_examples() {
        let g = CopulaModel::gumbel(2.0).unwrap();
        let t = theta_from_copula(&g, &[0.5, 0.9, 0.99]).unwrap();
        assert!((t.theta - 2f64.sqrt()).abs() < 1e-12 && t.spread < 1e-12 && t.extremal);
        let t = theta_from_copula(&CopulaModel::Independence, &DEFAULT_THETA_PROBES).unwrap();
        assert!((t.theta - 2.0).abs() < 1e-12);
        let t = theta_from_copula(&CopulaModel::gaussian(0.5).unwrap(), &[0.5, 0.9, 0.99]).unwrap();
        assert!(t.spread > 1e-3 && !t.extremal, "{t:?}");
        assert!(theta_from_copula(&g, &[0.5, 0.9]).is_err());
        assert!(theta_from_copula(&g, &[0.5, 0.9, 1.0]).is_err());
    }

    #[test]
    fn theta_decreases_with_gumbel_alpha() {
        let th: Vec<f64> = [1.2, 2.0, 5.0]
            .iter()
            .map(|&a| theta_from_copula(&CopulaModel::gumbel(a).unwrap(), &DEFAULT_THETA_PROBES).unwrap().theta)
            .collect();
        assert!(th[0] > th[1] && th[1] > th[2]);
    }

    #[test]
    fn logistic_subset_coefficient() {
        assert!((theta_m_logistic(2.0, 3).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(theta_m_logistic(1.0, 7).unwrap(), 7.0);
        assert_eq!(theta_m_logistic(f64::INFINITY, 5).unwrap(), 1.0);
        assert!(theta_m_logistic(0.9, 2).is_err());
    }

    #[test]
    fn covariogram_examples() {
        let id = |u: f64| u;
        let opts = QuadratureOptions { eps: 1e-6, cells: 400 };
        let c = copula_covariogram(&CopulaModel::Independence, &id, &id, 0.5, 0.5, opts).unwrap();
        assert!(c.abs() < 1e-5, "{c}");
        let c = copula_covariogram(&CopulaModel::Comonotone, &id, &id, 0.5, 0.5, opts).unwrap();
        assert!((c - 1.0 / 12.0).abs() < 1e-5, "{c}");
        let v = copula_variogram(&CopulaModel::Comonotone, &id, &id, 0.5, 0.5, 1.0 / 12.0, 1.0 / 12.0, opts)
            .unwrap();
        assert!(v.abs() < 1e-5, "{v}");
    }

    #[test]
    fn covariogram_gaussian_matches_correlation() {
        // normal margins: covariance equals rho
        let q = crate::numeric::norm_quantile;
        let opts = QuadratureOptions { eps: 1e-9, cells: 600 };
        let c = copula_covariogram(&CopulaModel::gaussian(0.5).unwrap(), &q, &q, 0.0, 0.0, opts).unwrap();
        assert!((c - 0.5).abs() < 2e-3, "{c}");
    }

    #[test]
    fn covariogram_is_symmetric_in_margins() {
        let qi = |u: f64| u * u;
        let qj = |u: f64| -(-u.ln()).ln();
        let opts = QuadratureOptions { eps: 1e-6, cells: 300 };
        for m in [CopulaModel::gumbel(2.0).unwrap(), CopulaModel::clayton(1.5).unwrap(), CopulaModel::gaussian(0.3).unwrap()] {
            let a = copula_covariogram(&m, &qi, &qj, 1.0 / 3.0, EULER_GAMMA, opts).unwrap();
            let b = copula_covariogram(&m, &qj, &qi, EULER_GAMMA, 1.0 / 3.0, opts).unwrap();
            assert!((a - b).abs() < 1e-10, "{m}: {a} {b}");
        }
    }
}
