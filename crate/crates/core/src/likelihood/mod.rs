//! Full-trajectory and partial log-likelihoods.
//!
//! The full log-likelihood of a trajectory on `[0, T]` splits into a transmission
//! part and two sojourn parts. The transmission part is a sum over hosts of
//!
//! ```text
//! l_x = 1[x exposed in (0, T]] * ln(alpha + beta * s_x) - alpha * a_x - beta * b_x
//! ```
//!
//! where `s_x` is the kernel sum over `I(E_x-)`, `a_x = min(E_x, T)` is the time `x`
//! spends susceptible and `b_x = sum_y K(d(x, y)) * |[0, min(E_x, T)) ∩ [I_y, R_y)|`
//! is the kernel-weighted overlap of that susceptible period with each infectious
//! period. This is the exact pressure integral, because rates are constant between
//! events. An exposure time only enters its own host's term, which keeps MCMC
//! updates O(N).

mod partial;
mod summary;

use crate::error::{Error, Result};
use crate::gamma::GammaSojourn;
use crate::model::{HostId, KernelSpec, ModelParams, Trajectory};
use crate::numeric::CompensatedSum;

pub use partial::{extract_partial_data, partial_loglik, PartialData, PartialEvent, PartialSummary};
pub use summary::{SojournSummary, TransmissionSummary};

/// A log-likelihood value together with the count of events that had zero rate.
///
/// Any zero-rate event makes the value `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub zero_rate_events: usize,
}

impl LogLik {
    pub fn is_impossible(&self) -> bool {
        self.zero_rate_events > 0
    }
}

/// Per-host pieces of the transmission log-likelihood for a given kernel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HostTerms {
    /// Kernel sum over `I(E_x-)`, present when `x` has an exposure event in the window.
    pub exposure_kernel_sum: Option<f64>,
    /// Kernel-weighted overlap of the susceptible period with infectious periods.
    pub overlap_kernel_sum: f64,
    /// Time spent susceptible within the window.
    pub susceptible_time: f64,
}

impl HostTerms {
    #[inline]
    pub fn loglik(&self, alpha: f64, beta: f64) -> f64 {
        let survival = -alpha * self.susceptible_time - beta * self.overlap_kernel_sum;
        match self.exposure_kernel_sum {
            Some(s) => (alpha + beta * s).ln() + survival,
            None => survival,
        }
    }
}

/// Compute [`HostTerms`] for host `x` from scratch (O(N)).
pub fn host_terms(kernel: &KernelSpec, traj: &Trajectory, x: HostId) -> HostTerms {
    host_terms_with_exposure(kernel, traj, x, traj.host(x).exposure)
}

/// [`HostTerms`] for host `x` as if its exposure time were `exposure`.
///
/// Nothing else in `traj` depends on an exposure time, so this is the only term
/// that changes when one is moved, added or deleted.
pub fn host_terms_with_exposure(
    kernel: &KernelSpec,
    traj: &Trajectory,
    x: HostId,
    exposure: Option<f64>,
) -> HostTerms {
    let hosts = traj.hosts();
    if hosts[x].is_seed() {
        return HostTerms::default();
    }
    let end = exposure.map_or(traj.t_max(), |e| e.min(traj.t_max()));
    let pop = traj.population();
    let mut overlap = CompensatedSum::new();
    let mut at_exposure = CompensatedSum::new();
    for (y, other) in hosts.iter().enumerate() {
        let Some(start) = other.infection else {
            continue;
        };
        if y == x || start >= end {
            continue;
        }
        let k = kernel.value(pop.distance(x, y));
        let stop = other.removal.map_or(end, |r| r.min(end));
        if stop > start {
            overlap.add(k * (stop - start));
        }
        if let Some(e) = exposure {
            if other.infectious_before(e) {
                at_exposure.add(k);
            }
        }
    }
    HostTerms {
        exposure_kernel_sum: exposure.map(|_| at_exposure.value()),
        overlap_kernel_sum: overlap.value(),
        susceptible_time: end,
    }
}

/// Transmission part of the full log-likelihood.
pub fn transmission_loglik(params: &ModelParams, traj: &Trajectory) -> LogLik {
    let mut sum = CompensatedSum::new();
    let mut zero = 0;
    for x in 0..traj.len() {
        let terms = host_terms(&params.kernel, traj, x);
        if let Some(s) = terms.exposure_kernel_sum {
            if !(params.alpha + params.beta * s > 0.0) {
                zero += 1;
            }
        }
        sum.add(terms.loglik(params.alpha, params.beta));
    }
    LogLik {
        value: if zero > 0 { f64::NEG_INFINITY } else { sum.value() },
        zero_rate_events: zero,
    }
}

/// Log-density (or log-survival when censored) of host `x`'s latent period.
#[inline]
pub fn latent_term(dist: &GammaSojourn, traj: &Trajectory, x: HostId) -> f64 {
    let h = traj.host(x);
    match h.exposure_event() {
        None => 0.0,
        Some(e) => match h.infection {
            Some(i) => dist.ln_pdf(i - e),
            None => dist.ln_sf(traj.t_max() - e),
        },
    }
}

/// Log-density (or log-survival when censored) of host `x`'s infectious period.
#[inline]
pub fn infectious_term(dist: &GammaSojourn, traj: &Trajectory, x: HostId) -> f64 {
    let h = traj.host(x);
    match h.infection {
        None => 0.0,
        Some(i) => match h.removal {
            Some(r) => dist.ln_pdf(r - i),
            None => dist.ln_sf(traj.t_max() - i),
        },
    }
}

pub fn latent_loglik(dist: &GammaSojourn, traj: &Trajectory) -> f64 {
    (0..traj.len())
        .map(|x| latent_term(dist, traj, x))
        .collect::<CompensatedSum>()
        .value()
}

pub fn infectious_loglik(dist: &GammaSojourn, traj: &Trajectory) -> f64 {
    (0..traj.len())
        .map(|x| infectious_term(dist, traj, x))
        .collect::<CompensatedSum>()
        .value()
}

/// Exact log-likelihood `ln pi(x | theta)` of a complete trajectory.
pub fn full_loglik(params: &ModelParams, traj: &Trajectory) -> Result<LogLik> {
    params.validate()?;
    traj.check_structure()?;
    let trans = transmission_loglik(params, traj);
    if trans.is_impossible() {
        return Ok(trans);
    }
    let latent = latent_loglik(&params.latent.distribution()?, traj);
    let infectious = infectious_loglik(&params.infectious.distribution()?, traj);
    let mut s = CompensatedSum::new();
    s.add(trans.value);
    s.add(latent);
    s.add(infectious);
    Ok(LogLik {
        value: s.value(),
        zero_rate_events: 0,
    })
}

/// Gradient of the full log-likelihood with respect to `(alpha, beta, kappa)`.
pub fn transmission_gradient(params: &ModelParams, traj: &Trajectory) -> Result<[f64; 3]> {
    params.validate()?;
    let pop = traj.population();
    let hosts = traj.hosts();
    let (alpha, beta, kernel) = (params.alpha, params.beta, params.kernel);
    let mut g = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    for x in 0..traj.len() {
        if hosts[x].is_seed() {
            continue;
        }
        let terms = host_terms(&kernel, traj, x);
        // derivatives of s_x and b_x with respect to kappa
        let mut ds = 0.0;
        let mut db = 0.0;
        let end = terms.susceptible_time;
        for (y, other) in hosts.iter().enumerate() {
            let Some(start) = other.infection else { continue };
            if y == x {
                continue;
            }
            let dk = kernel.d_kappa(pop.distance(x, y));
            let stop = other.removal.map_or(end, |r| r.min(end));
            if stop > start {
                db += dk * (stop - start);
            }
            if let Some(e) = hosts[x].exposure {
                if other.infectious_before(e) {
                    ds += dk;
                }
            }
        }
        g[0].add(-terms.susceptible_time);
        g[1].add(-terms.overlap_kernel_sum);
        g[2].add(-beta * db);
        if let Some(s) = terms.exposure_kernel_sum {
            let rate = alpha + beta * s;
            if !(rate > 0.0) {
                return Err(Error::domain(format!("zero exposure rate at host {x}")));
            }
            g[0].add(1.0 / rate);
            g[1].add(s / rate);
            g[2].add(beta * ds / rate);
        }
    }
    Ok([g[0].value(), g[1].value(), g[2].value()])
}

#[cfg(test)]
mod tests;
