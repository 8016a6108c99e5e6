//! Seeded simulation of spatial fields with unit-Fréchet margins.
//!
//! Replication `r` draws from its own ChaCha stream `(seed, r)`, so output is
//! identical for any number of worker threads.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::copulas::{positive_stable, stream_rng};
use crate::dataset::{Site, SpatialDataset};
use crate::error::{invalid, Result};
use crate::numeric::norm_cdf;
use crate::par;

/// Truncation radius of the Smith storm window, in units of the storm scale.
pub const DEFAULT_RADIUS_SCALES: f64 = 5.0;

/// Field model to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimKind {
    /// Independent unit-Fréchet cells.
    IidFrechet,
    /// Gaussian field with correlation `exp(−d/range)`, mapped to unit Fréchet.
    GaussianCopulaField { range: f64 },
    /// Smith storm process with isotropic Gaussian storms of scale `sigma`;
    /// storm centres are drawn on the site bounding box padded by `radius`.
    SmithStorm { sigma: f64, radius: f64 },
    /// Symmetric logistic field with dependence parameter `alpha ≥ 1`; every
    /// pair of sites has a Gumbel copula.
    LogisticPairs { alpha: f64 },
}

impl SimKind {
    pub fn smith(sigma: f64) -> Self {
        Self::SmithStorm { sigma, radius: DEFAULT_RADIUS_SCALES * sigma }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::IidFrechet => Ok(()),
            Self::GaussianCopulaField { range } if range > 0.0 && range.is_finite() => Ok(()),
            Self::GaussianCopulaField { range } => Err(invalid(format!("correlation range must be positive, got {range}"))),
            Self::SmithStorm { sigma, radius } if sigma > 0.0 && sigma.is_finite() && radius >= 0.0 && radius.is_finite() => Ok(()),
            Self::SmithStorm { .. } => Err(invalid("storm scale must be positive and radius non-negative")),
            Self::LogisticPairs { alpha } if alpha >= 1.0 => Ok(()),
            Self::LogisticPairs { alpha } => Err(invalid(format!("logistic alpha must be >= 1, got {alpha}"))),
        }
    }
}

/// Simulation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: SimKind,
    pub n_reps: usize,
    pub seed: u64,
}

/// Simulated dataset and any diagnostics raised while building it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub dataset: SpatialDataset,
    pub warnings: Vec<String>,
}

/// Simulate `spec.n_reps` replications at `sites`.
pub fn simulate(spec: &SimSpec, sites: &[Site]) -> Result<SimOutput> {
    if sites.is_empty() {
        return Err(invalid("at least one site is required"));
    }
    if spec.n_reps == 0 {
        return Err(invalid("at least one replication is required"));
    }
    spec.kind.validate()?;
    let mut warnings = Vec::new();
    let generator = Generator::new(spec.kind, sites, &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let rows = par::map_indexed(spec.n_reps, |r| {
        let mut rng = stream_rng(spec.seed, r as u64);
        generator.draw(&mut rng)
    });
    Ok(SimOutput { dataset: SpatialDataset::from_rows(sites.to_vec(), rows)?, warnings })
}

enum Generator {
    Iid { n: usize },
    Gaussian { chol: Vec<Vec<f64>> },
    Smith(Storms),
    Logistic { n: usize, beta: f64 },
}

struct Storms {
    xy: Vec<(f64, f64)>,
    sigma: f64,
    x0: f64,
    y0: f64,
    width: f64,
    height: f64,
}

impl Generator {
    fn new(kind: SimKind, sites: &[Site], warnings: &mut Vec<String>) -> Result<Self> {
        Ok(match kind {
            SimKind::IidFrechet => Self::Iid { n: sites.len() },
            SimKind::GaussianCopulaField { range } => {
                let n = sites.len();
                let cov: Vec<Vec<f64>> = (0..n)
                    .map(|i| (0..n).map(|j| (-sites[i].distance(&sites[j]) / range).exp()).collect())
                    .collect();
                Self::Gaussian { chol: cholesky_jittered(&cov)? }
            }
            SimKind::SmithStorm { sigma, radius } => {
                let storms = Storms::new(sites, sigma, radius);
                let worst = storms
                    .xy
                    .iter()
                    .map(|&p| storms.kernel_mass(p))
                    .fold(1.0, f64::min);
                if worst < 0.95 {
                    warnings.push(format!(
                        "storm window too small: kernel mass {worst:.4} at the worst site, \
                         marginal scale deviates more than 5% from unit Fréchet"
                    ));
                }
                Self::Smith(storms)
            }
            SimKind::LogisticPairs { alpha } => Self::Logistic { n: sites.len(), beta: 1.0 / alpha },
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Iid { n } => (0..*n).map(|_| -1.0 / rng.sample::<f64, _>(Open01).ln()).collect(),
            Self::Gaussian { chol } => {
                let eps: Vec<f64> = (0..chol.len()).map(|_| rng.sample(StandardNormal)).collect();
                chol.iter()
                    .map(|row| {
                        let z: f64 = row.iter().zip(&eps).map(|(l, e)| l * e).sum();
                        gaussian_to_frechet(z)
                    })
                    .collect()
            }
            Self::Smith(s) => s.draw(rng),
            Self::Logistic { n, beta } => {
                let s = positive_stable(rng, *beta);
                (0..*n)
                    .map(|_| {
                        let e: f64 = rng.sample(Exp1);
                        (s / e).powf(*beta)
                    })
                    .collect()
            }
        }
    }
}

/// `−1 / log Φ(z)`, accurate in both tails.
fn gaussian_to_frechet(z: f64) -> f64 {
    let log_phi = if z > 0.0 { (-norm_cdf(-z)).ln_1p() } else { norm_cdf(z).ln() };
    -1.0 / log_phi
}

/// Lower Cholesky factor, retrying with a growing diagonal jitter when the
/// matrix is numerically singular.
fn cholesky_jittered(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut jitter = 0.0;
    for _ in 0..12 {
        if let Some(l) = cholesky(a, jitter) {
            if jitter > 0.0 {
                log::warn!("covariance regularised with diagonal jitter {jitter:e}");
            }
            return Ok(l);
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
    Err(invalid("covariance matrix is not positive definite (duplicate sites?)"))
}

fn cholesky(a: &[Vec<f64>], jitter: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] + jitter - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

impl Storms {
    fn new(sites: &[Site], sigma: f64, radius: f64) -> Self {
        let xy: Vec<(f64, f64)> = sites.iter().map(|s| (s.x, s.y)).collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &xy {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Self {
            xy,
            sigma,
            x0: x0 - radius,
            y0: y0 - radius,
            width: x1 - x0 + 2.0 * radius,
            height: y1 - y0 + 2.0 * radius,
        }
    }

    /// Mass of the storm kernel centred at `p` that falls inside the window.
    fn kernel_mass(&self, (x, y): (f64, f64)) -> f64 {
        let s = self.sigma;
        let along = |lo: f64, len: f64, c: f64| norm_cdf((lo + len - c) / s) - norm_cdf((lo - c) / s);
        along(self.x0, self.width, x) * along(self.y0, self.height, y)
    }

    /// One replication: storms arrive in decreasing order of strength
    /// `A/Γₖ` and the series stops once no storm can raise any site.
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let area = self.width * self.height;
        let two_s2 = 2.0 * self.sigma * self.sigma;
        let peak = 1.0 / (PI * two_s2);
        let mut z = vec![0.0f64; self.xy.len()];
        let mut gamma = 0.0;
        let mut floor = 0.0;
        loop {
            gamma += rng.sample::<f64, _>(Exp1);
            let strength = area / gamma * peak;
            if strength < floor {
                break;
            }
            let cx = self.x0 + self.width * rng.sample::<f64, _>(Open01);
            let cy = self.y0 + self.height * rng.sample::<f64, _>(Open01);
            for (zs, &(x, y)) in z.iter_mut().zip(&self.xy) {
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                let v = strength * (-d2 / two_s2).exp();
                if v > *zs {
                    *zs = v;
                }
            }
            floor = z.iter().copied().fold(f64::INFINITY, f64::min);
        }
        z
    }
}

/// Pairwise extremal coefficient of the Smith model, `2Φ(h/(2σ))`.
pub fn smith_theta(h: f64, sigma: f64) -> f64 {
    2.0 * norm_cdf(h / (2.0 * sigma))
}
