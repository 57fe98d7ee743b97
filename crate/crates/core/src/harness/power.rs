//! Power of a latent test versus a test on complete data.
//!
//! Toy setting with two simple hypotheses: `M0` and `M1` are single parameter
//! vectors, so the likelihood ratio `log T = l0(x) - l1(x)` needs no fitting and
//! its null distribution is one fixed reference sample simulated from `M0`.
//!
//! For data `y` simulated from `M1`, the latent test imputes `x | y` under `M0` and
//! records `gamma(y)`, the fraction of imputations whose p-value falls below the
//! level. The latent power is the mean of `gamma` over replicates. The complete-data
//! power applies the same test to the trajectory that generated `y`; observing
//! `x` is at least as informative as observing `y`, so the latent power cannot
//! exceed it.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{initial_augmentation, run_chain_from, ChainSettings, PriorSpec};
use crate::likelihood::full_loglik;
use crate::model::{HostPopulation, KernelFamily, KernelSpec, ModelParams, Sojourn, Trajectory};
use crate::numeric::mean_and_se;
use crate::rng::{child_rng, mix_seed};
use crate::simulator::{simulate, SimulationOptions};

use super::config::{parse as parse_value, parse_kernel, parse_sojourn};

pub const MAX_TOY_HOSTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub n_hosts: usize,
    pub region_side: f64,
    pub horizon: f64,
    pub null: ModelParams,
    pub alt: ModelParams,
    pub alpha_level: f64,
    pub replicates: usize,
    /// Imputed trajectories per replicate.
    pub imputations: usize,
    pub mcmc_iterations: usize,
    pub reference_draws: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let latent = Sojourn { mean: 2.0, var: 1.0 };
        let infectious = Sojourn { mean: 3.0, var: 1.0 };
        Self {
            n_hosts: 12,
            region_side: 20.0,
            horizon: 12.0,
            null: ModelParams {
                alpha: 0.01,
                beta: 0.5,
                kernel: KernelSpec {
                    family: KernelFamily::Exponential,
                    kappa: 0.3,
                },
                latent,
                infectious,
            },
            alt: ModelParams {
                alpha: 0.01,
                beta: 0.5,
                kernel: KernelSpec {
                    family: KernelFamily::PowerLaw,
                    kappa: 2.0,
                },
                latent,
                infectious,
            },
            alpha_level: 0.05,
            replicates: 200,
            imputations: 20,
            mcmc_iterations: 2_000,
            reference_draws: 2_000,
        }
    }
}

impl PowerConfig {
    pub(crate) fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = format!("power.{key}");
        match key {
            "n_hosts" => self.n_hosts = parse_value(&k, v)?,
            "region_side" => self.region_side = parse_value(&k, v)?,
            "horizon" => self.horizon = parse_value(&k, v)?,
            "alpha_level" => self.alpha_level = parse_value(&k, v)?,
            "replicates" => self.replicates = parse_value(&k, v)?,
            "imputations" => self.imputations = parse_value(&k, v)?,
            "mcmc_iterations" => self.mcmc_iterations = parse_value(&k, v)?,
            "reference_draws" => self.reference_draws = parse_value(&k, v)?,
            "null.alpha" => self.null.alpha = parse_value(&k, v)?,
            "null.beta" => self.null.beta = parse_value(&k, v)?,
            "null.kernel" => self.null.kernel = parse_kernel(&k, v)?,
            "alt.alpha" => self.alt.alpha = parse_value(&k, v)?,
            "alt.beta" => self.alt.beta = parse_value(&k, v)?,
            "alt.kernel" => self.alt.kernel = parse_kernel(&k, v)?,
            "latent" => {
                let s = parse_sojourn(&k, v)?;
                self.null.latent = s;
                self.alt.latent = s;
            }
            "infectious" => {
                let s = parse_sojourn(&k, v)?;
                self.null.infectious = s;
                self.alt.infectious = s;
            }
            _ => return Err(Error::Config(format!("unknown key '{k}'"))),
        }
        Ok(())
    }

    pub(crate) fn entries(&self) -> Vec<(&'static str, String)> {
        let kernel = |k: &KernelSpec| format!("{}:{}", k.family.tag(), k.kappa);
        let sojourn = |s: &Sojourn| format!("{}:{}", s.mean, s.var);
        vec![
            ("n_hosts", self.n_hosts.to_string()),
            ("region_side", self.region_side.to_string()),
            ("horizon", self.horizon.to_string()),
            ("alpha_level", self.alpha_level.to_string()),
            ("replicates", self.replicates.to_string()),
            ("imputations", self.imputations.to_string()),
            ("mcmc_iterations", self.mcmc_iterations.to_string()),
            ("reference_draws", self.reference_draws.to_string()),
            ("null.alpha", self.null.alpha.to_string()),
            ("null.beta", self.null.beta.to_string()),
            ("null.kernel", kernel(&self.null.kernel)),
            ("alt.alpha", self.alt.alpha.to_string()),
            ("alt.beta", self.alt.beta.to_string()),
            ("alt.kernel", kernel(&self.alt.kernel)),
            ("latent", sojourn(&self.null.latent)),
            ("infectious", sojourn(&self.null.infectious)),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hosts == 0 || self.n_hosts > MAX_TOY_HOSTS {
            return Err(Error::Config(format!(
                "power.n_hosts must be in 1..={MAX_TOY_HOSTS}, got {}",
                self.n_hosts
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config("power.horizon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_level) {
            return Err(Error::Config("power.alpha_level must lie in [0, 1]".into()));
        }
        if self.imputations == 0 || self.reference_draws == 0 || self.mcmc_iterations < 2 * self.imputations {
            return Err(Error::Config(
                "power.imputations and power.reference_draws must be positive and power.mcmc_iterations at least twice power.imputations".into(),
            ));
        }
        self.null.validate()?;
        self.alt.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerMode {
    /// Test applied to trajectories imputed under the null.
    #[serde(rename = "latent-x")]
    LatentX,
    /// Test applied to the trajectory that generated the data.
    #[serde(rename = "complete-x")]
    CompleteX,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub alpha_level: f64,
    pub beta_hat: f64,
    pub mode: PowerMode,
    pub replicates: usize,
    pub standard_error: f64,
}

fn log_t(cfg: &PowerConfig, x: &Trajectory) -> Result<f64> {
    Ok(full_loglik(&cfg.null, x)?.value - full_loglik(&cfg.alt, x)?.value)
}

/// p-value of `t` against a sorted reference sample, ties weighted one half.
pub(crate) fn sorted_exceedance(t: f64, sorted: &[f64]) -> f64 {
    let below = sorted.partition_point(|&r| r < t);
    let tied = sorted.partition_point(|&r| r <= t) - below;
    (below as f64 + 0.5 * tied as f64) / sorted.len() as f64
}

/// Latent and complete-data power at level `alpha_level` over `replicates`
/// datasets simulated from the alternative.
pub fn estimate_latent_power(
    cfg: &PowerConfig,
    alpha_level: f64,
    replicates: usize,
    seed: u64,
) -> Result<(PowerEstimate, PowerEstimate)> {
    rejection_rates(cfg, &cfg.alt, alpha_level, replicates, seed)
}

/// As [`estimate_latent_power`] but with data simulated from `generating`; with
/// `generating = cfg.null` both rates estimate the size of the test.
pub fn rejection_rates(
    cfg: &PowerConfig,
    generating: &ModelParams,
    alpha_level: f64,
    replicates: usize,
    seed: u64,
) -> Result<(PowerEstimate, PowerEstimate)> {
    generating.validate()?;
    let cfg = PowerConfig {
        alpha_level,
        replicates,
        ..cfg.clone()
    };
    cfg.validate()?;
    if replicates == 0 {
        return Err(Error::Config("power replicates must be positive".into()));
    }
    let pop = Arc::new(HostPopulation::uniform(
        cfg.n_hosts,
        cfg.region_side,
        &mut child_rng(seed, 0),
    )?);
    let options = SimulationOptions::horizon(cfg.horizon);

    let ref_seed = mix_seed(seed, 1);
    let mut reference = (0..cfg.reference_draws as u64)
        .into_par_iter()
        .map(|j| {
            let x = simulate(&cfg.null, &pop, &options, &mut child_rng(ref_seed, j))?;
            log_t(&cfg, &x)
        })
        .collect::<Result<Vec<f64>>>()?;
    reference.sort_by(f64::total_cmp);
    let rejects = |x: &Trajectory| -> Result<f64> {
        let p = sorted_exceedance(log_t(&cfg, x)?, &reference);
        Ok(if p < alpha_level { 1.0 } else { 0.0 })
    };

    let settings = ChainSettings {
        iterations: cfg.mcmc_iterations,
        burn_in: Some(cfg.mcmc_iterations / 2),
        thin: Some((cfg.mcmc_iterations / 2 / cfg.imputations).max(1)),
        update_params: false,
        fit_init: false,
        adapt: false,
        init: Some(cfg.null),
        ..ChainSettings::default()
    };
    let priors = PriorSpec::flat();
    let rep_seed = mix_seed(seed, 2);
    let results = (0..replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let mut rng = child_rng(rep_seed, r);
            let x = simulate(generating, &pop, &options, &mut rng)?;
            let complete = rejects(&x)?;
            let y = x.observed();
            let start = initial_augmentation(&y, cfg.null.latent.mean)?;
            let chain = run_chain_from(start, cfg.null, &priors, &settings, mix_seed(rep_seed, r))?;
            let kept = &chain.samples[chain.samples.len().saturating_sub(cfg.imputations)..];
            let hits = kept.iter().map(|s| rejects(&s.aug)).sum::<Result<f64>>()?;
            Ok((hits / kept.len() as f64, complete))
        })
        .collect::<Result<Vec<_>>>()?;

    let estimate = |mode, values: Vec<f64>| {
        let (beta_hat, standard_error) = mean_and_se(&values);
        PowerEstimate {
            alpha_level,
            beta_hat,
            mode,
            replicates,
            standard_error,
        }
    };
    let (gamma, complete): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok((
        estimate(PowerMode::LatentX, gamma),
        estimate(PowerMode::CompleteX, complete),
    ))
}
