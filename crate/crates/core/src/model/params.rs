use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaSojourn;

use super::kernel::{KernelFamily, KernelSpec};

/// Mean and variance of a Gamma sojourn period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sojourn {
    pub mean: f64,
    pub var: f64,
}

impl Sojourn {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        GammaSojourn::from_mean_var(mean, var)?;
        Ok(Self { mean, var })
    }

    pub fn shape(&self) -> f64 {
        self.mean * self.mean / self.var
    }

    pub fn rate(&self) -> f64 {
        self.mean / self.var
    }

    pub fn distribution(&self) -> Result<GammaSojourn> {
        GammaSojourn::from_mean_var(self.mean, self.var)
    }
}

/// Index into the seven-component parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    Alpha,
    Beta,
    Kappa,
    LatentMean,
    LatentVar,
    InfectiousMean,
    InfectiousVar,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::Alpha,
        Param::Beta,
        Param::Kappa,
        Param::LatentMean,
        Param::LatentVar,
        Param::InfectiousMean,
        Param::InfectiousVar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Beta => "beta",
            Param::Kappa => "kappa",
            Param::LatentMean => "mu_e",
            Param::LatentVar => "var_e",
            Param::InfectiousMean => "mu_i",
            Param::InfectiousVar => "var_i",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Full SEIR parameter set: primary rate, secondary scale, kernel and the two sojourns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub kernel: KernelSpec,
    pub latent: Sojourn,
    pub infectious: Sojourn,
}

impl ModelParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        kernel: KernelSpec,
        latent: Sojourn,
        infectious: Sojourn,
    ) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            kernel,
            latent,
            infectious,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be finite and >= 0, got {}", self.alpha),
            });
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be finite and >= 0, got {}", self.beta),
            });
        }
        KernelSpec::new(self.kernel.family, self.kernel.kappa)?;
        self.latent.distribution()?;
        self.infectious.distribution()?;
        Ok(())
    }

    /// Baseline simulation parameters with an exponential kernel.
    pub fn original() -> Self {
        Self {
            alpha: 0.001,
            beta: 3.0,
            kernel: KernelSpec {
                family: KernelFamily::Exponential,
                kappa: 0.03,
            },
            latent: Sojourn {
                mean: 5.0,
                var: 2.5,
            },
            infectious: Sojourn {
                mean: 1.772,
                var: 0.858,
            },
        }
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Alpha => self.alpha,
            Param::Beta => self.beta,
            Param::Kappa => self.kernel.kappa,
            Param::LatentMean => self.latent.mean,
            Param::LatentVar => self.latent.var,
            Param::InfectiousMean => self.infectious.mean,
            Param::InfectiousVar => self.infectious.var,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        match p {
            Param::Alpha => self.alpha = value,
            Param::Beta => self.beta = value,
            Param::Kappa => self.kernel.kappa = value,
            Param::LatentMean => self.latent.mean = value,
            Param::LatentVar => self.latent.var = value,
            Param::InfectiousMean => self.infectious.mean = value,
            Param::InfectiousVar => self.infectious.var = value,
        }
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        self.set(p, value);
        self
    }

    pub fn to_vec(&self) -> [f64; 7] {
        Param::ALL.map(|p| self.get(p))
    }

    pub fn from_vec(family: KernelFamily, v: [f64; 7]) -> Self {
        let mut p = Self::original();
        p.kernel.family = family;
        for (param, value) in Param::ALL.iter().zip(v) {
            p.set(*param, value);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn original_matches_baseline_table() {
        let p = ModelParams::original();
        assert_eq!(
            p.to_vec(),
            [0.001, 3.0, 0.03, 5.0, 2.5, 1.772, 0.858]
        );
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_negative_rates() {
        let p = ModelParams::original().with(Param::Alpha, -1.0);
        assert!(p.validate().is_err());
        let p = ModelParams::original().with(Param::LatentVar, 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn vector_round_trip() {
        let p = ModelParams::original().with(Param::Kappa, 0.06);
        assert_eq!(ModelParams::from_vec(KernelFamily::Exponential, p.to_vec()), p);
    }
}
