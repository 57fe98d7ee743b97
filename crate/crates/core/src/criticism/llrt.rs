//! Latent likelihood ratio statistics.
//!
//! For a retained state `(theta, x)` the statistic is
//! `log T = l0(theta; x) - max over theta1 of l1(theta1; x)`, using either the full
//! latent log-likelihood or the partial likelihood of the exposure sequence. Its
//! reference draw `T'` comes from a fresh trajectory simulated under `theta` over the
//! same population and horizon.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{extract_partial_data, full_loglik, PartialSummary};
use crate::model::{KernelFamily, ModelParams, Trajectory};
use crate::simulator::{simulate, InitialCondition, SimulationOptions, StopRule};

use super::mle::{maximize_full, maximize_partial, MleOptions, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlrtOptions {
    pub objective: Objective,
    /// Reference trajectories simulated per retained state.
    pub draws_per_sample: usize,
    pub mle: MleOptions,
}

impl LlrtOptions {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            draws_per_sample: 1,
            mle: MleOptions::default(),
        }
    }
}

/// `log T` for one trajectory under null parameters `null` and alternative family `alt`.
pub fn log_ratio<R: Rng + ?Sized>(
    objective: Objective,
    traj: &Trajectory,
    null: &ModelParams,
    alt: KernelFamily,
    opts: &MleOptions,
    rng: &mut R,
) -> Result<f64> {
    let (l0, l1) = match objective {
        Objective::Full => {
            let l0 = full_loglik(null, traj)?.value;
            (l0, maximize_full(traj, alt, null, opts, rng)?.loglik_at_max)
        }
        Objective::Partial => {
            let z = extract_partial_data(traj);
            let l0 = PartialSummary::new(&z).loglik(&null.kernel, null.alpha, null.beta).value;
            (l0, maximize_partial(&z, alt, null, opts, rng)?.loglik_at_max)
        }
    };
    if l0.is_nan() || l1.is_nan() {
        return Err(Error::Optimisation("log ratio is undefined".into()));
    }
    Ok(l0 - l1)
}

/// Frequency of reference draws below the observed statistic, ties counting one half.
pub fn exceedance(log_t: f64, reference: &[f64]) -> f64 {
    if reference.is_empty() {
        return f64::NAN;
    }
    let score: f64 = reference
        .iter()
        .map(|&r| {
            if r < log_t {
                1.0
            } else if r == log_t {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    score / reference.len() as f64
}

/// Trajectory from the null model over the population and horizon of `like`, with the
/// same hosts infectious at time zero.
pub fn simulate_reference<R: Rng + ?Sized>(
    null: &ModelParams,
    like: &Trajectory,
    rng: &mut R,
) -> Result<Trajectory> {
    let seeds = like.seeds();
    let options = SimulationOptions {
        stop: StopRule::Horizon(like.t_max()),
        initial: if seeds.is_empty() {
            InitialCondition::AllSusceptible
        } else {
            InitialCondition::Seeded(seeds)
        },
    };
    simulate(null, like.population(), &options, rng)
}

/// `log T` of `traj` and of `opts.draws_per_sample` reference trajectories.
pub fn sample_statistics<R: Rng + ?Sized>(
    traj: &Trajectory,
    null: &ModelParams,
    alt: KernelFamily,
    opts: &LlrtOptions,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let log_t = log_ratio(opts.objective, traj, null, alt, &opts.mle, rng)?;
    let reference = (0..opts.draws_per_sample.max(1))
        .map(|_| {
            let x = simulate_reference(null, traj, rng)?;
            log_ratio(opts.objective, &x, null, alt, &opts.mle, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((log_t, reference))
}
