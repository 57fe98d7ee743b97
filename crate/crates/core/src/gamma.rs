//! Gamma sojourn distributions parameterised by mean and variance.
//!
//! Sojourn times are Gamma with shape `mu^2 / var` and rate `mu / var`.
//! Densities and survival terms are evaluated in log space. The survival term
//! uses the complemented regularized incomplete gamma function directly, and
//! switches to a log-space continued fraction in the far tail where `Q(a, x)`
//! underflows.

use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Relative tolerance of [`GammaSojourn::quantile`].
pub const QUANTILE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSojourn {
    shape: f64,
    rate: f64,
    ln_norm: f64,
}

impl GammaSojourn {
    pub fn from_mean_var(mean: f64, var: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sojourn mean",
                reason: format!("must be finite and > 0, got {mean}"),
            });
        }
        if !(var.is_finite() && var > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sojourn variance",
                reason: format!("must be finite and > 0, got {var}"),
            });
        }
        Self::from_shape_rate(mean * mean / var, mean / var)
    }

    pub fn from_shape_rate(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma shape/rate",
                reason: format!("shape={shape}, rate={rate}"),
            });
        }
        Ok(Self {
            shape,
            rate,
            ln_norm: shape * rate.ln() - ln_gamma(shape),
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::NEG_INFINITY;
        }
        if t == 0.0 {
            return match self.shape.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => self.ln_norm,
                _ => f64::NEG_INFINITY,
            };
        }
        self.ln_norm + (self.shape - 1.0) * t.ln() - self.rate * t
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t.is_infinite() {
            return 1.0;
        }
        gamma_lr(self.shape, self.rate * t)
    }

    /// Log of the survival function `P(T > t)`.
    pub fn ln_sf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t.is_infinite() {
            return f64::NEG_INFINITY;
        }
        let x = self.rate * t;
        let a = self.shape;
        if x > a + 1.0 {
            ln_upper_regularized_cf(a, x)
        } else {
            gamma_ur(a, x).ln()
        }
    }

    /// Inverse CDF by safeguarded Newton iteration inside a bisection bracket.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::domain(format!("quantile probability {p} outside [0,1]")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            return Ok(f64::INFINITY);
        }
        let a = self.shape;
        // Work on the unit-rate scale x = rate * t.
        let mut lo = 0.0_f64;
        let mut hi = a.max(1.0);
        while gamma_lr(a, hi) < p {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::domain("gamma quantile bracket overflow"));
            }
        }
        let ln_norm_unit = -ln_gamma(a);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = gamma_lr(a, x) - p;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let dens = (ln_norm_unit + (a - 1.0) * x.ln() - x).exp();
            let mut next = if dens > 0.0 && dens.is_finite() {
                x - f / dens
            } else {
                f64::NAN
            };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let converged = (next - x).abs() <= QUANTILE_REL_TOL * next.abs().max(f64::MIN_POSITIVE)
                || (hi - lo) <= QUANTILE_REL_TOL * hi;
            x = next;
            if converged {
                break;
            }
        }
        Ok(x / self.rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated gamma parameters")
            .sample(rng)
    }
}

/// `ln Q(a, x)` via the modified Lentz continued fraction, valid for `x > a + 1`.
fn ln_upper_regularized_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    a * x.ln() - x - ln_gamma(a) + h.ln()
}
