use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaSojourn;
use crate::model::{KernelFamily, ModelParams, Param};

/// Prior on one positive parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// Uniform on `(0, upper)`; flat in acceptance ratios.
    UniformPositive { upper: f64 },
    GammaMeanVar { mean: f64, var: f64 },
}

impl Prior {
    pub const FLAT: Prior = Prior::UniformPositive { upper: f64::MAX };

    /// Log density up to a constant; `-inf` outside the support.
    pub fn ln_density(&self, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::UniformPositive { upper } => {
                if v < upper {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::GammaMeanVar { mean, var } => match GammaSojourn::from_mean_var(mean, var) {
                Ok(g) => g.ln_pdf(v),
                Err(_) => f64::NEG_INFINITY,
            },
        }
    }

    pub fn is_proper(&self) -> bool {
        match *self {
            Prior::UniformPositive { upper } => upper < f64::MAX,
            Prior::GammaMeanVar { .. } => true,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Prior::UniformPositive { upper } if upper < f64::MAX => {
                Ok(upper * (1.0 - rng.random::<f64>()))
            }
            Prior::UniformPositive { .. } => Err(Error::domain("cannot sample an improper flat prior")),
            Prior::GammaMeanVar { mean, var } => Ok(GammaSojourn::from_mean_var(mean, var)?.sample(rng)),
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        let ok = match *self {
            Prior::UniformPositive { upper } => upper > 0.0,
            Prior::GammaMeanVar { mean, var } => mean > 0.0 && var > 0.0 && mean.is_finite() && var.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                reason: format!("invalid prior {self:?}"),
            })
        }
    }
}

/// One prior per model parameter, indexed like [`Param::ALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub priors: [Prior; 7],
}

impl Default for PriorSpec {
    fn default() -> Self {
        let vague = Prior::GammaMeanVar { mean: 1.0, var: 100.0 };
        let mut priors = [Prior::FLAT; 7];
        priors[Param::Beta.index()] = vague;
        priors[Param::Kappa.index()] = vague;
        Self { priors }
    }
}

impl PriorSpec {
    pub fn flat() -> Self {
        Self {
            priors: [Prior::FLAT; 7],
        }
    }

    pub fn get(&self, p: Param) -> Prior {
        self.priors[p.index()]
    }

    pub fn set(&mut self, p: Param, prior: Prior) {
        self.priors[p.index()] = prior;
    }

    pub fn validate(&self) -> Result<()> {
        Param::ALL
            .iter()
            .try_for_each(|&p| self.get(p).validate(p.name()))
    }

    pub fn ln_density(&self, params: &ModelParams) -> f64 {
        Param::ALL
            .iter()
            .map(|&p| self.get(p).ln_density(params.get(p)))
            .sum()
    }

    /// Draw a full parameter vector; every prior must be proper.
    pub fn sample<R: Rng + ?Sized>(&self, family: KernelFamily, rng: &mut R) -> Result<ModelParams> {
        let mut v = [0.0; 7];
        for p in Param::ALL {
            v[p.index()] = self.get(p).sample(rng)?;
        }
        let params = ModelParams::from_vec(family, v);
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn defaults() {
        let spec = PriorSpec::default();
        assert_eq!(spec.get(Param::Alpha), Prior::FLAT);
        assert_eq!(spec.get(Param::Beta), Prior::GammaMeanVar { mean: 1.0, var: 100.0 });
        assert!(!spec.get(Param::InfectiousVar).is_proper());
        assert_eq!(Prior::FLAT.ln_density(1e300), 0.0);
        assert_eq!(Prior::FLAT.ln_density(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_prior_density_and_draws() {
        let p = Prior::GammaMeanVar { mean: 2.0, var: 0.5 };
        let mut rng = rng_from_seed(3);
        let draws: Vec<f64> = (0..20_000).map(|_| p.sample(&mut rng).unwrap()).collect();
        let (m, se) = crate::numeric::mean_and_se(&draws);
        assert!((m - 2.0).abs() < 4.0 * se);
        // shape 8, rate 4: ln density at 2 is 8 ln 4 - ln 7! + 7 ln 2 - 8
        let expected = 8.0 * 4f64.ln() - 5040f64.ln() + 7.0 * 2f64.ln() - 8.0;
        assert!((p.ln_density(2.0) - expected).abs() < 1e-12);
        assert!(Prior::FLAT.sample(&mut rng).is_err());
    }
}
