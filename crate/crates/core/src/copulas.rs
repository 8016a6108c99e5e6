//! Bivariate copulas: parametric families, the empirical copula, rectangle
//! volumes, diagonal sections, densities and seeded samplers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Gamma, StandardNormal};

use crate::error::{domain, invalid, Error, Result};
use crate::numeric::{integrate, norm_cdf, norm_pdf, norm_quantile};
use crate::par;

/// Pairs drawn from one RNG stream; streams are keyed by chunk index.
pub(crate) const SAMPLE_CHUNK: usize = 1024;

/// Empirical copula of a sample of pseudo-observation pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCopula {
    pairs: Vec<(f64, f64)>,
}

impl EmpiricalCopula {
    /// At least two pairs, every coordinate in `(0, 1)`.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InsufficientData("empirical copula of an empty sample".into()));
        }
        if pairs.len() < 2 {
            return Err(Error::InsufficientData("empirical copula needs at least 2 pairs".into()));
        }
        if pairs.iter().any(|&(u, v)| !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0)) {
            return Err(invalid("pseudo-observations must lie in (0,1)"));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// `(1/n) #{k : U_k ≤ u, V_k ≤ v}`.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let hits = self.pairs.iter().filter(|&&(a, b)| a <= u && b <= v).count();
        hits as f64 / self.pairs.len() as f64
    }
}

/// Empirical copula of `pairs` at `(u, v)`.
pub fn empirical_copula(pairs: &[(f64, f64)], u: f64, v: f64) -> Result<f64> {
    check_unit(u)?;
    check_unit(v)?;
    if pairs.is_empty() {
        return Err(Error::InsufficientData("empirical copula of an empty sample".into()));
    }
    let hits = pairs.iter().filter(|&&(a, b)| a <= u && b <= v).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// A bivariate copula.
#[derive(Debug, Clone, PartialEq)]
pub enum CopulaModel {
    Independence,
    Comonotone,
    /// Gumbel–Hougaard, `α ≥ 1`.
    Gumbel { alpha: f64 },
    /// Gaussian, `ρ ∈ (−1, 1)`.
    Gaussian { rho: f64 },
    /// Clayton, `θ > 0`.
    Clayton { theta: f64 },
    Empirical(EmpiricalCopula),
}

fn check_unit(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(invalid(format!("copula argument {u} outside [0,1]")))
    }
}

impl CopulaModel {
    pub fn gumbel(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(invalid(format!("gumbel alpha must be >= 1, got {alpha}")));
        }
        Ok(Self::Gumbel { alpha })
    }

    pub fn gaussian(rho: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(invalid(format!("gaussian rho must lie in (-1,1), got {rho}")));
        }
        Ok(Self::Gaussian { rho })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid(format!("clayton theta must be > 0, got {theta}")));
        }
        Ok(Self::Clayton { theta })
    }

    pub fn empirical(pairs: Vec<(f64, f64)>) -> Result<Self> {
        EmpiricalCopula::new(pairs).map(Self::Empirical)
    }

    /// Families whose diagonal is an exact power `D(u) = u^θ`.
    pub fn is_extremal(&self) -> bool {
        matches!(self, Self::Independence | Self::Comonotone | Self::Gumbel { .. })
    }

    /// `C(u, v)`.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        check_unit(u)?;
        check_unit(v)?;
        Ok(self.eval(u, v))
    }

    pub(crate) fn eval(&self, u: f64, v: f64) -> f64 {
        if let Self::Empirical(e) = self {
            return e.eval(u, v);
        }
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v;
        }
        if v >= 1.0 {
            return u;
        }
        match *self {
            Self::Independence => u * v,
            Self::Comonotone => u.min(v),
            Self::Gumbel { alpha } => {
                let (x, y) = (-u.ln(), -v.ln());
                let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
                let a = hi * (1.0 + (lo / hi).powf(alpha)).powf(1.0 / alpha);
                (-a).exp()
            }
            Self::Gaussian { rho } => gaussian_cdf(rho, u, v),
            Self::Clayton { theta } => {
                let s = u.powf(-theta) + v.powf(-theta) - 1.0;
                s.powf(-1.0 / theta)
            }
            Self::Empirical(_) => unreachable!(),
        }
    }

    /// Diagonal section `D(u) = C(u, u)`.
    pub fn diagonal(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        Ok(self.diag(u))
    }

    pub(crate) fn diag(&self, u: f64) -> f64 {
        match *self {
            Self::Gumbel { alpha } if u > 0.0 && u < 1.0 => {
                (2f64.powf(1.0 / alpha) * u.ln()).exp()
            }
            _ => self.eval(u, u),
        }
    }

    /// C-volume of `[u1, u2] × [v1, v2]`.
    pub fn rect_volume(&self, u1: f64, u2: f64, v1: f64, v2: f64) -> Result<f64> {
        for x in [u1, u2, v1, v2] {
            check_unit(x)?;
        }
        if u1 > u2 || v1 > v2 {
            return Err(invalid("inverted rectangle: need u1 <= u2 and v1 <= v2"));
        }
        Ok(self.eval(u2, v2) - self.eval(u1, v2) - self.eval(u2, v1) + self.eval(u1, v1))
    }

    /// Copula density `c(u, v)` on the open unit square.
    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
            return Err(invalid("density arguments must lie in (0,1)"));
        }
        match *self {
            Self::Independence => Ok(1.0),
            Self::Gumbel { alpha } => {
                let (x, y) = (-u.ln(), -v.ln());
                let s = x.powf(alpha) + y.powf(alpha);
                let a = s.powf(1.0 / alpha);
                let c = (-a).exp();
                Ok(c / (u * v) * (x * y).powf(alpha - 1.0) * s.powf(-2.0 + 1.0 / alpha) * (a + alpha - 1.0))
            }
            Self::Gaussian { rho } => {
                let (x, y) = (norm_quantile(u), norm_quantile(v));
                let one_m = 1.0 - rho * rho;
                let q = (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_m);
                Ok((-q).exp() / one_m.sqrt())
            }
            Self::Clayton { theta } => {
                let s = u.powf(-theta) + v.powf(-theta) - 1.0;
                Ok((1.0 + theta) * (u * v).powf(-theta - 1.0) * s.powf(-2.0 - 1.0 / theta))
            }
            Self::Comonotone => Err(domain("comonotone copula has no density")),
            Self::Empirical(_) => Err(domain("empirical copula has no density")),
        }
    }

    /// `n` i.i.d. pairs with uniform margins, deterministic for a given seed.
    ///
    /// Gumbel uses the positive-stable frailty construction, Clayton the gamma
    /// frailty, Gaussian a correlated normal pair mapped through `Φ`.
    pub fn sample_pairs(&self, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        if n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        if let Self::Empirical(_) = self {
            return Err(invalid("sampling from an empirical copula is not supported"));
        }
        let sampler = PairSampler::new(self)?;
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        let blocks = par::map_indexed(chunks, |c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            (0..len).map(|_| sampler.draw(&mut rng)).collect::<Vec<_>>()
        });
        Ok(blocks.into_iter().flatten().collect())
    }
}

/// Independent generator for stream `stream` of `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw from the positive stable law with Laplace transform `exp(−t^β)`,
/// `0 < β ≤ 1` (Chambers–Mallows–Stuck / Kanter representation).
pub(crate) fn positive_stable<R: Rng + ?Sized>(rng: &mut R, beta: f64) -> f64 {
    if beta >= 1.0 {
        return 1.0;
    }
    let theta = PI * rng.sample::<f64, _>(Open01);
    let w: f64 = rng.sample(Exp1);
    let log_s = (beta * theta).sin().ln() - theta.sin().ln() / beta
        + (1.0 - beta) / beta * (((1.0 - beta) * theta).sin().ln() - w.ln());
    log_s.exp()
}

#[derive(Debug, Clone, Copy)]
enum PairSampler {
    Independence,
    Comonotone,
    Gumbel { beta: f64 },
    Gaussian { rho: f64, s: f64 },
    Clayton { theta: f64, frailty: Gamma<f64> },
}

impl PairSampler {
    fn new(m: &CopulaModel) -> Result<Self> {
        Ok(match *m {
            CopulaModel::Independence => Self::Independence,
            CopulaModel::Comonotone => Self::Comonotone,
            CopulaModel::Gumbel { alpha } => Self::Gumbel { beta: 1.0 / alpha },
            CopulaModel::Gaussian { rho } => Self::Gaussian { rho, s: (1.0 - rho * rho).sqrt() },
            CopulaModel::Clayton { theta } => Self::Clayton {
                theta,
                frailty: Gamma::new(1.0 / theta, 1.0).map_err(|e| invalid(e.to_string()))?,
            },
            CopulaModel::Empirical(_) => return Err(invalid("unsupported family for sampling")),
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            Self::Independence => (rng.sample(Open01), rng.sample(Open01)),
            Self::Comonotone => {
                let u = rng.sample(Open01);
                (u, u)
            }
            Self::Gumbel { beta } => {
                let s = positive_stable(rng, beta);
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                ((-(e1 / s).powf(beta)).exp(), (-(e2 / s).powf(beta)).exp())
            }
            Self::Gaussian { rho, s } => {
                let z1: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                (norm_cdf(z1), norm_cdf(rho * z1 + s * e))
            }
            Self::Clayton { theta, frailty } => {
                let v = rng.sample(frailty);
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                ((-(e1 / v).ln_1p() / theta).exp(), (-(e2 / v).ln_1p() / theta).exp())
            }
        }
    }
}

/// Gaussian copula cdf by adaptive quadrature of the conditional form
/// `∫_{−∞}^{Φ⁻¹(u)} φ(x) Φ((Φ⁻¹(v) − ρx)/√(1−ρ²)) dx`.
///
/// Evaluated on the smaller of the lower/upper orthants (radial symmetry) so
/// probabilities near the corners keep relative accuracy; target 1e−10.
fn gaussian_cdf(rho: f64, u: f64, v: f64) -> f64 {
    if rho == 0.0 {
        return u * v;
    }
    if u + v > 1.0 {
        return u + v - 1.0 + gaussian_lower(rho, 1.0 - u, 1.0 - v);
    }
    gaussian_lower(rho, u, v)
}

fn gaussian_lower(rho: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    let a = norm_quantile(u);
    let b = norm_quantile(v);
    let s = (1.0 - rho * rho).sqrt();
    let f = |x: f64| norm_pdf(x) * norm_cdf((b - rho * x) / s);
    let lower = -40.0;
    if a <= lower {
        return 0.0;
    }
    let panels = 16;
    let width = (a - lower) / panels as f64;
    let tol = 1e-13 * u.min(v) / panels as f64;
    let total: f64 = (0..panels)
        .map(|k| {
            let lo = lower + k as f64 * width;
            integrate(&f, lo, lo + width, tol)
        })
        .sum();
    total.clamp((u + v - 1.0).max(0.0), u.min(v))
}

impl fmt::Display for CopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Independence => write!(f, "independence"),
            Self::Comonotone => write!(f, "comonotone"),
            Self::Gumbel { alpha } => write!(f, "gumbel:alpha={alpha}"),
            Self::Gaussian { rho } => write!(f, "gaussian:rho={rho}"),
            Self::Clayton { theta } => write!(f, "clayton:theta={theta}"),
            Self::Empirical(e) => write!(f, "empirical(n={})", e.pairs.len()),
        }
    }
}

impl FromStr for CopulaModel {
    type Err = Error;

    /// Parse `independence`, `comonotone`, `gumbel:alpha=2.0`,
    /// `gaussian:rho=0.5` or `clayton:theta=1.0`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, arg) = match s.split_once(':') {
            Some((f, a)) => (f.trim(), Some(a.trim())),
            None => (s, None),
        };
        let param = |name: &str| -> Result<f64> {
            let arg = arg.ok_or_else(|| invalid(format!("copula {family} needs {name}=<value>")))?;
            let (key, value) = arg
                .split_once('=')
                .ok_or_else(|| invalid(format!("malformed copula parameter {arg:?}")))?;
            if key.trim() != name {
                return Err(invalid(format!("copula {family} expects parameter {name}, got {key}")));
            }
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("unparsable copula parameter {value:?}")))
        };
        match family.to_ascii_lowercase().as_str() {
            "independence" if arg.is_none() => Ok(Self::Independence),
            "comonotone" if arg.is_none() => Ok(Self::Comonotone),
            "gumbel" => Self::gumbel(param("alpha")?),
            "gaussian" => Self::gaussian(param("rho")?),
            "clayton" => Self::clayton(param("theta")?),
            _ => Err(invalid(format!("unknown copula specification {s:?}"))),
        }
    }
}
