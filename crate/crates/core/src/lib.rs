//! Spatio-temporal SEIR epidemics with spatial transmission kernels.
//!
//! The crate covers the whole pipeline used to criticise a fitted kernel:
//!
//! * [`model`]: hosts, kernels, parameters, trajectories and the exposure-rate arithmetic.
//! * [`simulator`]: exact event-driven simulation and the functional (uniform-stream) map.
//! * [`likelihood`]: full-trajectory and partial log-likelihoods.
//! * [`inference`]: data-augmented reversible-jump MCMC.
//! * [`criticism`]: infection-link residuals, latent likelihood ratio tests and the
//!   alternative-model MLE.
//! * [`harness`]: experiment configuration, the test matrix, power estimation and reports.

pub mod criticism;
pub mod error;
pub mod gamma;
pub mod harness;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{
    HostEvents, HostId, HostPopulation, KernelFamily, KernelSpec, ModelParams, ObservedData,
    Sojourn, Trajectory,
};
