use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-kappa d)`
    #[serde(rename = "exp")]
    Exponential,
    /// `(1 + d^kappa)^-1`
    #[serde(rename = "pow")]
    PowerLaw,
    /// `exp(-kappa d^2)`
    #[serde(rename = "gauss")]
    Gaussian,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Exponential,
        KernelFamily::PowerLaw,
        KernelFamily::Gaussian,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exp",
            KernelFamily::PowerLaw => "pow",
            KernelFamily::Gaussian => "gauss",
        }
    }

    /// Human-readable formula, as used in report tables.
    pub fn formula(self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exp(-k d)",
            KernelFamily::PowerLaw => "(1+d^k)^-1",
            KernelFamily::Gaussian => "exp(-k d^2)",
        }
    }

    /// Kappa giving `K(d) = level` at distance `d` (`0 < level < 1`, `d > 0`, and `d != 1`
    /// for the power law).
    pub fn kappa_for_level(self, d: f64, level: f64) -> f64 {
        match self {
            KernelFamily::Exponential => -level.ln() / d,
            KernelFamily::Gaussian => -level.ln() / (d * d),
            KernelFamily::PowerLaw => (1.0 / level - 1.0).ln() / d.ln(),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(KernelFamily::Exponential),
            "pow" | "power" | "powerlaw" | "power-law" => Ok(KernelFamily::PowerLaw),
            "gauss" | "gaussian" => Ok(KernelFamily::Gaussian),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// An isotropic spatial kernel: family plus decay parameter `kappa > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub kappa: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: format!("must be finite and > 0, got {kappa}"),
            });
        }
        Ok(Self { family, kappa })
    }

    /// Checked evaluation; negative or non-finite distances are a domain error.
    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) || d.is_infinite() {
            return Err(Error::domain(format!("kernel distance must be >= 0, got {d}")));
        }
        Ok(self.value(d))
    }

    /// Unchecked hot-path evaluation for `d >= 0`.
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential => (-self.kappa * d).exp(),
            KernelFamily::Gaussian => (-self.kappa * d * d).exp(),
            KernelFamily::PowerLaw => {
                if d == 0.0 {
                    1.0
                } else {
                    1.0 / (1.0 + (self.kappa * d.ln()).exp())
                }
            }
        }
    }

    /// Evaluation with a precomputed `ln d` (saves a logarithm for the power law).
    #[inline]
    pub fn value_with_ln(&self, d: f64, ln_d: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential => (-self.kappa * d).exp(),
            KernelFamily::Gaussian => (-self.kappa * d * d).exp(),
            KernelFamily::PowerLaw => {
                if d == 0.0 {
                    1.0
                } else {
                    1.0 / (1.0 + (self.kappa * ln_d).exp())
                }
            }
        }
    }

    /// Derivative of the kernel value with respect to kappa.
    #[inline]
    pub fn d_kappa(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential => -d * (-self.kappa * d).exp(),
            KernelFamily::Gaussian => -d * d * (-self.kappa * d * d).exp(),
            KernelFamily::PowerLaw => {
                if d == 0.0 {
                    0.0
                } else {
                    let ln_d = d.ln();
                    let p = (self.kappa * ln_d).exp();
                    -p * ln_d / ((1.0 + p) * (1.0 + p))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_at_origin() {
        for family in KernelFamily::ALL {
            let k = KernelSpec::new(family, 0.03).unwrap();
            assert_eq!(k.eval(0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn closed_form_values() {
        let pow = KernelSpec::new(KernelFamily::PowerLaw, 2.0).unwrap();
        assert_relative_eq!(pow.eval(3.0).unwrap(), 0.1, max_relative = 1e-14);
        let exp = KernelSpec::new(KernelFamily::Exponential, 0.03).unwrap();
        assert_relative_eq!(exp.eval(2f64.ln() / 0.03).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn negative_distance_is_domain_error() {
        let k = KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap();
        assert!(matches!(k.eval(-1.0), Err(Error::Domain(_))));
        assert!(KernelSpec::new(KernelFamily::Gaussian, 0.0).is_err());
    }

    #[test]
    fn kappa_for_level_round_trip() {
        for family in KernelFamily::ALL {
            let kappa = family.kappa_for_level(80.0, 0.1);
            let k = KernelSpec::new(family, kappa).unwrap();
            assert_relative_eq!(k.value(80.0), 0.1, max_relative = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for family in KernelFamily::ALL {
            let kappa = match family {
                KernelFamily::Gaussian => 1e-3,
                KernelFamily::PowerLaw => 1.5,
                KernelFamily::Exponential => 0.05,
            };
            let h = 1e-6 * kappa;
            let d = 17.0;
            let up = KernelSpec::new(family, kappa + h).unwrap().value(d);
            let dn = KernelSpec::new(family, kappa - h).unwrap().value(d);
            let k = KernelSpec::new(family, kappa).unwrap();
            assert_relative_eq!(k.d_kappa(d), (up - dn) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn parses_cli_tags() {
        assert_eq!("pow".parse::<KernelFamily>().unwrap(), KernelFamily::PowerLaw);
        assert_eq!("Gauss".parse::<KernelFamily>().unwrap(), KernelFamily::Gaussian);
        assert!("cauchy".parse::<KernelFamily>().is_err());
    }

    proptest! {
        #[test]
        fn monotone_non_increasing(
            fam in 0usize..3,
            kappa in 1e-4f64..5.0,
            a in 0.0f64..3000.0,
            b in 0.0f64..3000.0,
        ) {
            let k = KernelSpec::new(KernelFamily::ALL[fam], kappa).unwrap();
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let kn = k.eval(near).unwrap();
            let kf = k.eval(far).unwrap();
            prop_assert!(kf <= kn);
            prop_assert!(kn <= 1.0 && kf >= 0.0);
        }
    }
}
