//! Data-augmented MCMC for the spatial SEIR model.
//!
//! The state is `(theta, x)` where `x` completes the observations with exposure
//! times for every observed infection and with occult exposures (hosts exposed but
//! not yet infectious at the horizon). Parameters move by single-site random walks
//! on the log scale; exposure times move by MOVE / ADD / DELETE updates, the last two
//! being reversible-jump moves that change the number of occult exposures.
//!
//! Each host's contribution to the transmission likelihood depends on its own
//! exposure time only, so per-host terms are cached and an exposure update costs
//! O(N). A kappa update recomputes all of them.

mod prior;
mod sampler;
mod sources;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HostEvents, KernelFamily, KernelSpec, ModelParams, ObservedData, Trajectory};
use crate::rng::{mix_seed, rng_from_seed};

pub use prior::{Prior, PriorSpec};
pub use sampler::{AcceptanceStats, MoveKind, Sampler};
pub use sources::{impute_sources, SourcedExposure};

/// Retained state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub params: ModelParams,
    pub aug: Trajectory,
    pub log_posterior: f64,
    pub iteration: usize,
}

impl ChainState {
    pub fn occult_count(&self) -> usize {
        self.aug.occult_exposures().len()
    }
}

/// Run-length, adaptation and move-set options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub iterations: usize,
    /// Iterations discarded before retaining samples; default 20% of `iterations`.
    pub burn_in: Option<usize>,
    /// Keep every `thin`-th post-burn-in iteration; default keeps at most 10^4 samples.
    pub thin: Option<usize>,
    /// Exposure updates per iteration; default one per host.
    pub exposure_updates: Option<usize>,
    /// Sample exposure times; when false they are held at their starting values.
    pub augment: bool,
    /// Sample parameters; when false they are held at their starting values.
    pub update_params: bool,
    /// Target the prior alone (likelihood ignored).
    pub prior_only: bool,
    /// Robbins–Monro adaptation of the proposal scales during burn-in.
    pub adapt: bool,
    /// Initial random-walk standard deviation on the log scale.
    pub initial_scale: f64,
    /// Starting parameters; the kernel family always comes from the fitted model.
    pub init: Option<ModelParams>,
    /// Start (alpha, beta, kappa) at the maximum of the transmission likelihood of
    /// the initial augmented trajectory.
    pub fit_init: bool,
    /// MOVE window; default `mu_E + 3 sigma_E` under the current parameters, frozen
    /// once burn-in ends.
    pub move_window: Option<f64>,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: None,
            thin: None,
            exposure_updates: None,
            augment: true,
            update_params: true,
            prior_only: false,
            adapt: true,
            initial_scale: 0.1,
            init: None,
            fit_init: true,
            move_window: None,
        }
    }
}

pub const MAX_RETAINED: usize = 10_000;
const BURN_IN_FRACTION: f64 = 0.2;

impl ChainSettings {
    pub fn burn_in_len(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| (self.iterations as f64 * BURN_IN_FRACTION).floor() as usize)
            .min(self.iterations)
    }

    pub fn thin_len(&self) -> usize {
        let kept = self.iterations - self.burn_in_len();
        self.thin
            .unwrap_or_else(|| kept.div_ceil(MAX_RETAINED))
            .max(1)
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<ChainState>,
    pub stats: AcceptanceStats,
    pub proposal_scales: [f64; 7],
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

/// Starting kappa for a family: the kernel falls to 0.1 at the mean
/// nearest-neighbour distance.
pub fn default_kappa(family: KernelFamily, mean_nn: f64) -> f64 {
    let k = family.kappa_for_level(mean_nn, 0.1);
    if k.is_finite() && k > 0.0 {
        k
    } else {
        1.0
    }
}

/// Initial augmentation: each observed infection is preceded by an exposure one
/// mean latent period earlier (halfway to time zero if that would be negative).
pub fn initial_augmentation(y: &ObservedData, latent_mean: f64) -> Result<Trajectory> {
    let hosts = (0..y.len())
        .map(|h| {
            let infection = y.infection(h);
            let exposure = infection.map(|i| {
                if i == 0.0 {
                    0.0
                } else if i - latent_mean > 0.0 {
                    i - latent_mean
                } else {
                    0.5 * i
                }
            });
            HostEvents {
                exposure,
                infection,
                removal: y.removal(h),
            }
        })
        .collect();
    Trajectory::new(y.population().clone(), hosts, y.t_max())
}

fn starting_params(kernel: &KernelSpec, settings: &ChainSettings) -> ModelParams {
    let mut p = settings.init.unwrap_or_else(ModelParams::original);
    p.kernel = *kernel;
    p
}

/// Run one chain on observations `y`. `kernel` fixes the family and the starting kappa.
pub fn run_chain(
    y: &ObservedData,
    priors: &PriorSpec,
    kernel: &KernelSpec,
    settings: &ChainSettings,
    seed: u64,
) -> Result<ChainOutput> {
    if y.is_empty() {
        return Err(Error::InvalidObservation("no hosts observed".into()));
    }
    let params = starting_params(kernel, settings);
    let start = initial_augmentation(y, params.latent.mean)?;
    run_chain_from(start, params, priors, settings, seed)
}

/// Run one chain from a given complete trajectory and parameters.
pub fn run_chain_from(
    start: Trajectory,
    params: ModelParams,
    priors: &PriorSpec,
    settings: &ChainSettings,
    seed: u64,
) -> Result<ChainOutput> {
    priors.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut sampler = Sampler::new(start, params, priors.clone(), settings)?;
    let burn_in = settings.burn_in_len();
    let thin = settings.thin_len();
    let mut samples = Vec::new();
    for it in 0..settings.iterations {
        sampler.step(&mut rng, it < burn_in);
        if it >= burn_in && (it + 1 - burn_in) % thin == 0 {
            samples.push(sampler.state());
        }
    }
    Ok(ChainOutput {
        samples,
        stats: sampler.stats().clone(),
        proposal_scales: sampler.proposal_scales(),
        burn_in,
        thin,
        seed,
    })
}

/// Independent chains in parallel; chain `c` uses the sub-seed `mix_seed(seed, c)`.
pub fn run_chains(
    y: &ObservedData,
    priors: &PriorSpec,
    kernel: &KernelSpec,
    settings: &ChainSettings,
    seed: u64,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            let sub = mix_seed(seed, c);
            run_chain(y, priors, kernel, settings, sub)
        })
        .collect()
}
