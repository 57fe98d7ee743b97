//! Maximum likelihood fits of the alternative model to one latent trajectory.
//!
//! The full log-likelihood splits into a transmission block in `(alpha, beta, kappa)`
//! and two sojourn blocks in `(mean, var)`, which share no parameter, so each block is
//! maximised on its own. Searches run on log parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{PartialData, PartialSummary, SojournSummary, TransmissionSummary};
use crate::model::{KernelFamily, KernelSpec, ModelParams, Sojourn, Trajectory};
use crate::optim::{maximize_with_restarts, NelderMeadOptions, Optimum};

/// Log parameters beyond this magnitude are treated as outside the search space.
const LOG_BOUND: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Full latent log-likelihood over all seven parameters.
    Full,
    /// Partial likelihood of the exposure sequence; `beta` is fixed at 1.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Total Nelder–Mead runs per block: one from the start, the rest from jittered
    /// copies of the best point so far.
    pub runs: usize,
    /// Standard deviation of the restart jitter on the log scale.
    pub jitter: f64,
    pub simplex_tol: f64,
    pub max_evals: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            runs: 5,
            jitter: 0.5,
            simplex_tol: 1e-8,
            max_evals: 10_000,
        }
    }
}

impl MleOptions {
    fn nelder_mead(&self) -> NelderMeadOptions {
        NelderMeadOptions {
            simplex_tol: self.simplex_tol,
            max_evals: self.max_evals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub params: ModelParams,
    pub loglik_at_max: f64,
    pub converged: bool,
    pub evaluations: usize,
}

fn bounded(v: &[f64]) -> bool {
    v.iter().all(|x| x.abs() <= LOG_BOUND)
}

fn run<F: FnMut(&[f64]) -> f64, R: Rng + ?Sized>(
    mut f: F,
    x0: &[f64],
    opts: &MleOptions,
    rng: &mut R,
) -> Optimum {
    let step = vec![0.5; x0.len()];
    let objective = |v: &[f64]| if bounded(v) { f(v) } else { f64::NEG_INFINITY };
    maximize_with_restarts(
        objective,
        x0,
        &step,
        opts.runs.saturating_sub(1),
        opts.jitter,
        &opts.nelder_mead(),
        rng,
    )
}

/// Log of a starting value, clamped into the search box.
fn ln_or(v: f64, fallback: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v.ln().clamp(-LOG_BOUND, LOG_BOUND)
    } else {
        fallback
    }
}

/// Candidate starting kappas for `family`: the one matching `reference` at the mean
/// nearest-neighbour distance, then kernels falling to 1/2, 1/10 and 1/100 there.
fn kappa_starts(family: KernelFamily, reference: &KernelSpec, mean_nn: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if reference.family == family {
        out.push(reference.kappa);
    } else {
        let level = reference.value(mean_nn);
        if level > 0.0 && level < 1.0 {
            out.push(family.kappa_for_level(mean_nn, level));
        }
    }
    for level in [0.5, 0.1, 0.01] {
        out.push(family.kappa_for_level(mean_nn, level));
    }
    out.retain(|k| k.is_finite() && *k > 0.0);
    if out.is_empty() {
        out.push(1.0);
    }
    out
}

/// Best of several starting points for the last coordinate of `base`.
fn best_start<F: FnMut(&[f64]) -> f64>(mut f: F, base: &[f64], last: &[f64]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &v in last {
        let mut x = base.to_vec();
        *x.last_mut().unwrap() = v;
        let value = f(&x);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, x));
        }
    }
    best.map_or_else(|| base.to_vec(), |(_, x)| x)
}

fn kernel_of(family: KernelFamily, ln_kappa: f64) -> Option<KernelSpec> {
    KernelSpec::new(family, ln_kappa.exp()).ok()
}

fn fit_sojourn<R: Rng + ?Sized>(
    summary: &SojournSummary,
    init: Sojourn,
    opts: &MleOptions,
    rng: &mut R,
) -> (Sojourn, f64, bool, usize) {
    // search over (ln var, ln mean) so that best_start varies the mean
    let f = |v: &[f64]| summary.loglik_mean_var(v[1].exp(), v[0].exp());
    let var0 = ln_or(init.var, 0.0);
    let mut means = vec![ln_or(init.mean, 0.0)];
    if let Some(m) = summary.completed_mean().filter(|m| *m > 0.0) {
        means.push(ln_or(m, 0.0));
    }
    let x0 = best_start(f, &[var0, means[0]], &means);
    let opt = run(f, &x0, opts, rng);
    let s = Sojourn {
        mean: opt.x[1].exp(),
        var: opt.x[0].exp(),
    };
    (s, opt.value, opt.converged, opt.evaluations)
}

/// Fit the full model with kernel family `family` to a complete latent trajectory.
/// `init` supplies starting values; its kappa is only reused when its family matches.
pub fn maximize_full<R: Rng + ?Sized>(
    traj: &Trajectory,
    family: KernelFamily,
    init: &ModelParams,
    opts: &MleOptions,
    rng: &mut R,
) -> Result<MleResult> {
    let trans = TransmissionSummary::new(traj);
    let f = |v: &[f64]| match kernel_of(family, v[2]) {
        Some(k) => trans.loglik(&k, v[0].exp(), v[1].exp()).value,
        None => f64::NEG_INFINITY,
    };
    let mean_nn = traj.population().mean_nearest_neighbour();
    let kappas: Vec<f64> = kappa_starts(family, &init.kernel, mean_nn)
        .into_iter()
        .map(|k| ln_or(k, 0.0))
        .collect();
    let base = [ln_or(init.alpha, -7.0), ln_or(init.beta, 0.0), kappas[0]];
    let x0 = best_start(f, &base, &kappas);
    let t = run(f, &x0, opts, rng);

    let (latent, ll_e, conv_e, ev_e) = fit_sojourn(&SojournSummary::latent(traj), init.latent, opts, rng);
    let (infectious, ll_i, conv_i, ev_i) =
        fit_sojourn(&SojournSummary::infectious(traj), init.infectious, opts, rng);

    let total = t.value + ll_e + ll_i;
    if !total.is_finite() {
        return Err(Error::Optimisation(
            "no finite log-likelihood found in any restart".into(),
        ));
    }
    Ok(MleResult {
        params: ModelParams {
            alpha: t.x[0].exp(),
            beta: t.x[1].exp(),
            kernel: KernelSpec {
                family,
                kappa: t.x[2].exp(),
            },
            latent,
            infectious,
        },
        loglik_at_max: total,
        converged: t.converged && conv_e && conv_i,
        evaluations: t.evaluations + ev_e + ev_i,
    })
}

/// Fit `(alpha, kappa)` of the partial likelihood with `beta = 1`. The sojourns of the
/// result are copied from `init`.
pub fn maximize_partial<R: Rng + ?Sized>(
    z: &PartialData,
    family: KernelFamily,
    init: &ModelParams,
    opts: &MleOptions,
    rng: &mut R,
) -> Result<MleResult> {
    let summary = PartialSummary::new(z);
    let f = |v: &[f64]| match kernel_of(family, v[1]) {
        Some(k) => summary.loglik(&k, v[0].exp(), 1.0).value,
        None => f64::NEG_INFINITY,
    };
    let mean_nn = z.population().mean_nearest_neighbour();
    let kappas: Vec<f64> = kappa_starts(family, &init.kernel, mean_nn)
        .into_iter()
        .map(|k| ln_or(k, 0.0))
        .collect();
    // only alpha / beta enters the partial likelihood
    let ratio = if init.beta > 0.0 { init.alpha / init.beta } else { init.alpha };
    let base = [ln_or(ratio, -7.0), kappas[0]];
    let x0 = best_start(f, &base, &kappas);
    let opt = run(f, &x0, opts, rng);
    if !opt.value.is_finite() {
        return Err(Error::Optimisation(
            "no finite partial log-likelihood found in any restart".into(),
        ));
    }
    Ok(MleResult {
        params: ModelParams {
            alpha: opt.x[0].exp(),
            beta: 1.0,
            kernel: KernelSpec {
                family,
                kappa: opt.x[1].exp(),
            },
            ..*init
        },
        loglik_at_max: opt.value,
        converged: opt.converged,
        evaluations: opt.evaluations,
    })
}

/// Maximise the chosen objective for a trajectory; partial mode extracts the exposure
/// sets first.
pub fn maximize_loglik<R: Rng + ?Sized>(
    objective: Objective,
    traj: &Trajectory,
    family: KernelFamily,
    init: &ModelParams,
    opts: &MleOptions,
    rng: &mut R,
) -> Result<MleResult> {
    match objective {
        Objective::Full => maximize_full(traj, family, init, opts, rng),
        Objective::Partial => {
            let z = crate::likelihood::extract_partial_data(traj);
            maximize_partial(&z, family, init, opts, rng)
        }
    }
}
