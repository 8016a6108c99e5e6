//! Tail dependence of pairs on the unit-Fréchet scale.
//!
//! For the structure variable `W = min(Z(x), Z(x+h))` the joint survivor is
//! modelled as `P(W > w) = c · w^{−1/η}` above a threshold `u_h`, with
//! `η ∈ (0, 1]` the tail-dependence coefficient (`η = 1` for asymptotic
//! dependence). Two estimator variants are available through [`TailDepMode`]:
//! `Standard` (classical Hill and censored likelihood) and `ExcessRatio`
//! (excess ratios `(w − u)/u` and the alternative likelihood form).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{DistanceBins, SpatialDataset};
use crate::error::{domain, invalid, Error, Result};
use crate::numeric::quantile_sorted;
use crate::par;

/// Smallest value an estimate of `η` is clamped to.
pub const ETA_FLOOR: f64 = 1e-6;
/// Minimum number of threshold exceedances for a fit.
pub const MIN_EXCEEDANCES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDepMode {
    #[default]
    Standard,
    ExcessRatio,
}

impl fmt::Display for TailDepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::ExcessRatio => "excess_ratio",
        })
    }
}

impl FromStr for TailDepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "excess_ratio" | "excess-ratio" => Ok(Self::ExcessRatio),
            other => Err(invalid(format!("unknown mode '{other}' (expected standard or excess_ratio)"))),
        }
    }
}

/// Elementwise minimum of unit-Fréchet pairs.
pub fn structure_variable(pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(a, b)| {
            if a > 0.0 && b > 0.0 {
                Ok(a.min(b))
            } else {
                Err(invalid(format!("pair ({a}, {b}) is not on the unit-Fréchet scale")))
            }
        })
        .collect()
}

/// Estimate of `η` with its clamp flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub eta: f64,
    /// Value before clamping to `(0, 1]`.
    pub raw: f64,
    pub clamped: bool,
    pub n_exceed: usize,
}

fn exceedances(w: &[f64], u_h: f64) -> impl Iterator<Item = f64> + '_ {
    w.iter().copied().filter(move |&x| x > u_h)
}

/// Hill estimate of `η` from the values of `w` above `u_h`.
///
/// `Standard` averages `log(w/u_h)`; `ExcessRatio` averages
/// `log((w − u_h)/u_h)`, which is negative for `w < 2u_h`.
pub fn fit_eta(w: &[f64], u_h: f64, mode: TailDepMode) -> Result<EtaEstimate> {
    if !(u_h > 0.0 && u_h.is_finite()) {
        return Err(invalid(format!("threshold must be positive, got {u_h}")));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for x in exceedances(w, u_h) {
        sum += match mode {
            TailDepMode::Standard => (x / u_h).ln(),
            TailDepMode::ExcessRatio => ((x - u_h) / u_h).ln(),
        };
        n += 1;
    }
    if n < MIN_EXCEEDANCES {
        return Err(Error::InsufficientData(format!(
            "{n} exceedances of the threshold, at least {MIN_EXCEEDANCES} required"
        )));
    }
    let raw = sum / n as f64;
    let eta = raw.clamp(ETA_FLOOR, 1.0);
    Ok(EtaEstimate { eta, raw, clamped: eta != raw, n_exceed: n })
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(())
}

/// Scale estimate `ĉ = (n_u / n) · u_h^{1/η}`.
pub fn fit_scale_c(n_total: usize, n_exceed: usize, u_h: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(u_h > 0.0) {
        return Err(invalid("threshold must be positive"));
    }
    if n_exceed == 0 {
        return Err(Error::InsufficientData("no exceedances of the threshold".into()));
    }
    if n_exceed > n_total {
        return Err(invalid("more exceedances than observations"));
    }
    Ok(n_exceed as f64 / n_total as f64 * u_h.powf(1.0 / eta))
}

/// Censored log-likelihood of `(c, η)` given all structure values `w`.
///
/// Values at or below `u_h` contribute `log(1 − c·u_h^{−1/η})`. In `Standard`
/// mode each exceedance contributes the log density `log(c/η) − (1/η + 1) log w`;
/// in `ExcessRatio` mode the exceedances contribute
/// `n_u log(c/η − c) − (1/η) Σ w`, undefined at `η = 1`.
pub fn censored_loglik(c: f64, eta: f64, w: &[f64], u_h: f64, mode: TailDepMode) -> Result<f64> {
    check_eta(eta)?;
    if !(c > 0.0) || !(u_h > 0.0) {
        return Err(domain("scale and threshold must be positive"));
    }
    let tail = c * u_h.powf(-1.0 / eta);
    let n = w.len();
    let n_u = exceedances(w, u_h).count();
    let censored = if n > n_u {
        if tail >= 1.0 {
            return Err(domain("c · u_h^(−1/η) must be < 1"));
        }
        (n - n_u) as f64 * (-tail).ln_1p()
    } else {
        0.0
    };
    let exceed = match mode {
        TailDepMode::Standard => {
            let s: f64 = exceedances(w, u_h).map(|x| (x / u_h).ln()).sum();
            n_u as f64 * ((c / eta).ln() - (1.0 / eta + 1.0) * u_h.ln()) - (1.0 / eta + 1.0) * s
        }
        TailDepMode::ExcessRatio => {
            if eta >= 1.0 {
                return Err(domain("log(c/η − c) is undefined at η = 1"));
            }
            let s: f64 = exceedances(w, u_h).sum();
            n_u as f64 * (c / eta - c).ln() - s / eta
        }
    };
    Ok(censored + exceed)
}

/// Maximiser in `c` of the standard-mode likelihood at fixed `η`, found by
/// bisection on the score.
pub fn argmax_scale(eta: f64, w: &[f64], u_h: f64) -> Result<f64> {
    check_eta(eta)?;
    let n_u = exceedances(w, u_h).count();
    let n = w.len();
    if n_u == 0 {
        return Err(Error::InsufficientData("no exceedances of the threshold".into()));
    }
    let k = u_h.powf(-1.0 / eta);
    if n_u == n {
        // likelihood increases up to the admissible boundary
        return Ok(1.0 / k);
    }
    let score = |c: f64| n_u as f64 / c - (n - n_u) as f64 * k / (1.0 - c * k);
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0 / k);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Joint standard-mode maximum-likelihood estimate `(ĉ, η̂)` with `c`
/// profiled out and `η` found by golden-section search on `[ETA_FLOOR, 1]`.
pub fn profile_mle(w: &[f64], u_h: f64) -> Result<(f64, f64)> {
    let n = w.len();
    let n_u = exceedances(w, u_h).count();
    if n_u < MIN_EXCEEDANCES {
        return Err(Error::InsufficientData(format!("{n_u} exceedances, at least {MIN_EXCEEDANCES} required")));
    }
    let profile = |eta: f64| {
        let c = fit_scale_c(n, n_u, u_h, eta).and_then(|c| censored_loglik(c, eta, w, u_h, TailDepMode::Standard));
        c.unwrap_or(f64::NEG_INFINITY)
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (ETA_FLOOR, 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (profile(x1), profile(x2));
    while b - a > 1e-10 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = profile(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = profile(x1);
        }
    }
    let eta = 0.5 * (a + b);
    Ok((fit_scale_c(n, n_u, u_h, eta)?, eta))
}

/// Model extremogram `c · u^{1 − 1/η}` at a unit-Fréchet threshold `u > 1`.
pub fn model_extremogram(c: f64, eta: f64, u: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(c > 0.0) {
        return Err(domain("scale must be positive"));
    }
    if !(u > 1.0) {
        return Err(domain(format!("threshold must exceed 1 on the unit-Fréchet scale, got {u}")));
    }
    Ok(c * u.powf(1.0 - 1.0 / eta))
}

/// Extremal variogram `γ_E = 2(1 − η)`.
pub fn extremal_variogram(eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok(2.0 * (1.0 - eta))
}

/// Inverse of [`extremal_variogram`].
pub fn eta_from_variogram(gamma_e: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&gamma_e) {
        return Err(domain(format!("extremal variogram must lie in [0, 2), got {gamma_e}")));
    }
    Ok(1.0 - gamma_e / 2.0)
}

/// Decay exponent `−γ_E / (2 − γ_E)` of the model extremogram.
pub fn variogram_exponent(gamma_e: f64) -> Result<f64> {
    eta_from_variogram(gamma_e)?;
    Ok(-gamma_e / (2.0 - gamma_e))
}

/// Fitted tail model for one set of structure values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDepFit {
    pub eta_hat: f64,
    pub c_hat: f64,
    /// Threshold on the unit-Fréchet scale.
    pub u_h: f64,
    pub n_exceed: usize,
    pub n_total: usize,
    pub mode: TailDepMode,
    pub clamped: bool,
}

impl TailDepFit {
    pub fn gamma_e(&self) -> f64 {
        2.0 * (1.0 - self.eta_hat)
    }
}

/// Fit `(η̂, ĉ)` with `u_h` the empirical `q`-quantile of `w`.
pub fn fit_tail_dependence(w: &[f64], q: f64, mode: TailDepMode) -> Result<TailDepFit> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("threshold level must lie in (0,1), got {q}")));
    }
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(invalid("structure values must be positive"));
    }
    if w.is_empty() {
        return Err(Error::InsufficientData("no structure values".into()));
    }
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let u_h = quantile_sorted(&sorted, q);
    let eta = fit_eta(w, u_h, mode)?;
    let c_hat = fit_scale_c(w.len(), eta.n_exceed, u_h, eta.eta)?;
    Ok(TailDepFit {
        eta_hat: eta.eta,
        c_hat,
        u_h,
        n_exceed: eta.n_exceed,
        n_total: w.len(),
        mode,
        clamped: eta.clamped,
    })
}

/// Tail fit of one distance bin; `fit` is `None` for bins without pairs or
/// with too few exceedances.
#[derive(Debug, Clone, PartialEq)]
pub struct TailDepBin {
    pub bin_center: f64,
    pub n_pairs: usize,
    pub fit: Option<TailDepFit>,
}

/// Per-bin tail fits of a unit-Fréchet dataset, pooling `W` over the pairs of
/// each bin and the replications where both sites are observed.
pub fn taildep_curve(dataset: &SpatialDataset, bins: &DistanceBins, q: f64, mode: TailDepMode) -> Result<Vec<TailDepBin>> {
    if bins.total_pairs() == 0 {
        return Err(Error::InsufficientData("every distance bin is empty".into()));
    }
    let centers = bins.centers();
    let fits = par::map_slice(bins.pairs_per_bin(), |pairs| {
        if pairs.is_empty() {
            return Ok(None);
        }
        let mut w = Vec::with_capacity(pairs.len() * dataset.n_reps());
        for &(i, j) in pairs {
            for r in 0..dataset.n_reps() {
                let (a, b) = (dataset.raw(r, i), dataset.raw(r, j));
                if a.is_nan() || b.is_nan() {
                    continue;
                }
                if !(a > 0.0 && b > 0.0) {
                    return Err(invalid("dataset is not on the unit-Fréchet scale"));
                }
                w.push(a.min(b));
            }
        }
        match fit_tail_dependence(&w, q, mode) {
            Ok(f) => Ok(Some(f)),
            Err(Error::InsufficientData(msg)) => {
                log::warn!("tail fit skipped: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    });
    let out = fits
        .into_iter()
        .enumerate()
        .map(|(k, f)| {
            f.map(|fit| TailDepBin { bin_center: centers[k], n_pairs: bins.pairs(k).len(), fit })
        })
        .collect::<Result<Vec<_>>>()?;
    if out.iter().all(|b| b.fit.is_none()) {
        return Err(Error::InsufficientData("no bin has enough exceedances for a tail fit".into()));
    }
    Ok(out)
}
