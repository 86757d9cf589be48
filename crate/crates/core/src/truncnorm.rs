//! Truncated-normal CDF and its inversion in the mean parameter.
//!
//! Far-tail probabilities go through the scaled complementary error function
//! `erfcx(x) = exp(x²) erfc(x)`. For an interval lying entirely in the upper
//! tail the CDF ratio is
//!
//! ```text
//! (Q(z_a) − Q(z_x)) / (Q(z_a) − Q(z_b)),   Q(z) = ½ erfcx(z/√2) exp(−z²/2)
//! ```
//!
//! and the common factor `exp(−z_a²/2)` cancels, so nothing underflows even
//! for truncation points 40σ out. Lower-tail intervals are reflected.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Largest bracket half-width, in standard deviations, before an endpoint is
/// reported as infinite.
pub const MU_CAP_SIGMAS: f64 = 1000.0;
const INITIAL_BRACKET_SIGMAS: f64 = 10.0;
const MAX_BISECTIONS: usize = 200;

/// `exp(x²) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        // only used for moderate negative arguments
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 5.0 {
        return (x * x).exp() * erfc(x);
    }
    // Lentz continued fraction:
    // erfcx(x) = (1/√π) · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + 2/(x + ...)))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 * 0.5;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI / f
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Upper-tail probability `1 − Φ(z)`.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `log Φ(z)`, finite far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -5.0 {
        norm_cdf(z).ln()
    } else {
        let u = -z / SQRT_2;
        (0.5 * erfcx(u)).ln() - u * u
    }
}

/// Normal distribution with mean `mu`, variance `var`, truncated to `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub var: f64,
    pub a: f64,
    pub b: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, var: f64, a: f64, b: f64) -> Result<Self> {
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::Argument(format!("variance must be positive, got {var}")));
        }
        if !(a < b) || a.is_nan() || b.is_nan() || !mu.is_finite() {
            return Err(Error::Argument(format!("need a < b, got [{a}, {b}]")));
        }
        Ok(Self { mu, var, a, b })
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= self.a {
            return Ok(0.0);
        }
        if x >= self.b {
            return Ok(1.0);
        }
        let s = self.sd();
        let za = (self.a - self.mu) / s;
        let zb = (self.b - self.mu) / s;
        let zx = (x - self.mu) / s;
        let v = std_trunc_cdf(zx, za, zb)?;
        Ok(v.clamp(0.0, 1.0))
    }
}

/// CDF of a standard normal truncated to `[za, zb]`, evaluated at `zx ∈ (za, zb)`.
fn std_trunc_cdf(zx: f64, za: f64, zb: f64) -> Result<f64> {
    if za >= 0.0 {
        upper_tail_ratio(zx, za, zb)
    } else if zb <= 0.0 {
        // reflect: F(x; a, b) = 1 − F(−x; −b, −a)
        Ok(1.0 - upper_tail_ratio(-zx, -zb, -za)?)
    } else {
        // interval straddles zero: the denominator is at least Φ(min(|za|,zb)) − ½ in mass
        let num = if zx <= 0.0 {
            norm_cdf(zx) - norm_cdf(za)
        } else {
            norm_sf(za) - norm_sf(zx)
        };
        let den = norm_sf(za) - norm_sf(zb);
        if !(den > 0.0) {
            return Err(Error::TailDegenerate);
        }
        Ok(num / den)
    }
}

/// `(Q(za) − Q(zx)) / (Q(za) − Q(zb))` for `0 ≤ za < zx < zb`, with the
/// `exp(−za²/2)` factor cancelled.
fn upper_tail_ratio(zx: f64, za: f64, zb: f64) -> Result<f64> {
    let ua = za / SQRT_2;
    let ux = zx / SQRT_2;
    let ea = erfcx(ua);
    // erfcx(u) e^{-u²} relative to e^{-ua²}
    let rel = |u: f64| -> f64 {
        if u.is_infinite() {
            0.0
        } else {
            erfcx(u) * (-(u - ua) * (u + ua)).exp()
        }
    };
    let num = ea - rel(ux);
    let den = ea - rel(zb / SQRT_2);
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::TailDegenerate);
    }
    Ok(num / den)
}

/// Result of inverting the truncated-normal CDF in its mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeanRoot {
    Finite(f64),
    /// No root within `±MU_CAP_SIGMAS·σ` of the observation.
    PlusInfinity,
    MinusInfinity,
}

impl MeanRoot {
    pub fn value(self) -> f64 {
        match self {
            MeanRoot::Finite(v) => v,
            MeanRoot::PlusInfinity => f64::INFINITY,
            MeanRoot::MinusInfinity => f64::NEG_INFINITY,
        }
    }
}

/// Solve `F(x_obs; μ, σ², a, b) = target` for `μ`, using that `F` is strictly
/// decreasing in `μ`.
pub fn invert_mean(x_obs: f64, var: f64, a: f64, b: f64, target: f64) -> Result<MeanRoot> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Argument(format!("target must be in (0,1), got {target}")));
    }
    if !(a < x_obs && x_obs < b) {
        return Err(Error::Argument(format!(
            "observation {x_obs} is not strictly inside [{a}, {b}]"
        )));
    }
    let sd = var.sqrt();
    // g(μ) = F(μ) − target is decreasing; NaN-safe evaluation treats
    // degenerate tails as the limiting value on that side.
    let g = |mu: f64| -> Result<f64> {
        let tn = TruncatedNormal::new(mu, var, a, b)?;
        match tn.cdf(x_obs) {
            Ok(v) => Ok(v - target),
            Err(Error::TailDegenerate) => Ok(if mu > x_obs { -target } else { 1.0 - target }),
            Err(e) => Err(e),
        }
    };
    let cap = MU_CAP_SIGMAS * sd;
    let mut lo_w = INITIAL_BRACKET_SIGMAS * sd;
    let mut lo = x_obs - lo_w;
    while g(lo)? < 0.0 {
        if lo_w >= cap {
            return Ok(MeanRoot::MinusInfinity);
        }
        lo_w = (lo_w * 2.0).min(cap);
        lo = x_obs - lo_w;
    }
    let mut hi_w = INITIAL_BRACKET_SIGMAS * sd;
    let mut hi = x_obs + hi_w;
    while g(hi)? > 0.0 {
        if hi_w >= cap {
            return Ok(MeanRoot::PlusInfinity);
        }
        hi_w = (hi_w * 2.0).min(cap);
        hi = x_obs + hi_w;
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid)?;
        if v == 0.0 {
            return Ok(MeanRoot::Finite(mid));
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MeanRoot::Finite(0.5 * (lo + hi)))
}
