use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaSojourn;
use crate::likelihood::{full_loglik, host_terms_with_exposure, HostTerms, SojournSummary, TransmissionSummary};
use crate::model::{HostId, KernelSpec, ModelParams, Param, Trajectory};
use crate::numeric::CompensatedSum;
use crate::optim::{maximize, NelderMeadOptions};

use super::{ChainSettings, ChainState, PriorSpec};

const TARGET_ACCEPTANCE: f64 = 0.23;
const LOG_SCALE_BOUNDS: (f64, f64) = (-12.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Move,
    Add,
    Delete,
}

impl MoveKind {
    const ALL: [MoveKind; 3] = [MoveKind::Move, MoveKind::Add, MoveKind::Delete];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub param_proposed: [u64; 7],
    pub param_accepted: [u64; 7],
    pub move_proposed: [u64; 3],
    pub move_accepted: [u64; 3],
}

impl AcceptanceStats {
    pub fn param_rate(&self, p: Param) -> f64 {
        ratio(self.param_accepted[p.index()], self.param_proposed[p.index()])
    }

    pub fn move_rate(&self, kind: MoveKind) -> f64 {
        ratio(self.move_accepted[kind.index()], self.move_proposed[kind.index()])
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Set of host ids with O(1) insert, remove and uniform draw.
#[derive(Debug, Clone)]
struct HostSet {
    items: Vec<HostId>,
    pos: Vec<usize>,
}

impl HostSet {
    fn new(n: usize) -> Self {
        Self {
            items: Vec::new(),
            pos: vec![usize::MAX; n],
        }
    }

    fn insert(&mut self, h: HostId) {
        debug_assert_eq!(self.pos[h], usize::MAX);
        self.pos[h] = self.items.len();
        self.items.push(h);
    }

    fn remove(&mut self, h: HostId) {
        let k = self.pos[h];
        let last = *self.items.last().unwrap();
        self.items.swap_remove(k);
        if last != h {
            self.pos[last] = k;
        }
        self.pos[h] = usize::MAX;
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<HostId> {
        (!self.items.is_empty()).then(|| self.items[rng.random_range(0..self.items.len())])
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    // NaN ratios are rejected
    log_ratio >= 0.0 || open_unit(rng).ln() < log_ratio
}

/// The chain's mutable state with cached likelihood terms.
#[derive(Debug, Clone)]
pub struct Sampler {
    params: ModelParams,
    traj: Trajectory,
    priors: PriorSpec,
    prior_only: bool,
    update_params: bool,
    augment: bool,
    adapt: bool,
    exposure_updates: usize,
    terms: Vec<HostTerms>,
    trans_ll: f64,
    latent: GammaSojourn,
    latent_terms: Vec<f64>,
    latent_ll: f64,
    infectious_summary: SojournSummary,
    infectious_ll: f64,
    log_prior: f64,
    movable: Vec<HostId>,
    free: HostSet,
    occult: HostSet,
    log_scales: [f64; 7],
    adapt_counts: [u64; 7],
    fixed_window: Option<f64>,
    move_window: f64,
    stats: AcceptanceStats,
    iteration: usize,
}

impl Sampler {
    pub fn new(start: Trajectory, mut params: ModelParams, priors: PriorSpec, settings: &ChainSettings) -> Result<Self> {
        params.validate()?;
        start.check_structure()?;
        if settings.fit_init && settings.update_params && !settings.prior_only {
            let fitted = fit_transmission_start(&start, params);
            if priors.ln_density(&fitted).is_finite() {
                params = fitted;
            }
        }
        let n = start.len();
        let hosts = start.hosts();
        let movable: Vec<HostId> = (0..n)
            .filter(|&h| hosts[h].infection.is_some() && !hosts[h].is_seed())
            .collect();
        let mut free = HostSet::new(n);
        let mut occult = HostSet::new(n);
        for (h, ev) in hosts.iter().enumerate() {
            if ev.infection.is_none() {
                if ev.exposure.is_some() {
                    occult.insert(h);
                } else {
                    free.insert(h);
                }
            }
        }
        let latent = params.latent.distribution()?;
        let infectious_summary = SojournSummary::infectious(&start);
        let log_prior = priors.ln_density(&params);
        let exposure_updates = settings.exposure_updates.unwrap_or(n);
        let mut s = Self {
            trans_ll: 0.0,
            latent_ll: 0.0,
            params,
            traj: start,
            priors,
            prior_only: settings.prior_only,
            update_params: settings.update_params,
            augment: settings.augment && !settings.prior_only,
            adapt: settings.adapt,
            exposure_updates,
            terms: Vec::new(),
            latent,
            latent_terms: Vec::new(),
            infectious_summary,
            infectious_ll: 0.0,
            log_prior,
            movable,
            free,
            occult,
            log_scales: [settings.initial_scale.ln(); 7],
            adapt_counts: [0; 7],
            fixed_window: settings.move_window,
            move_window: 0.0,
            stats: AcceptanceStats::default(),
            iteration: 0,
        };
        s.rebuild_caches();
        s.refresh_window();
        if !s.log_target().is_finite() {
            return Err(Error::ImpossibleState(format!(
                "starting state has log target {}",
                s.log_target()
            )));
        }
        Ok(s)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn stats(&self) -> &AcceptanceStats {
        &self.stats
    }

    pub fn proposal_scales(&self) -> [f64; 7] {
        self.log_scales.map(f64::exp)
    }

    pub fn move_window(&self) -> f64 {
        self.move_window
    }

    pub fn log_likelihood(&self) -> f64 {
        self.trans_ll + self.latent_ll + self.infectious_ll
    }

    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood() + self.log_prior
    }

    fn log_target(&self) -> f64 {
        if self.prior_only {
            self.log_prior
        } else {
            self.log_posterior()
        }
    }

    pub fn state(&self) -> ChainState {
        ChainState {
            params: self.params,
            aug: self.traj.clone(),
            log_posterior: self.log_posterior(),
            iteration: self.iteration,
        }
    }

    /// Recompute the log posterior from scratch and compare with the cached value.
    pub fn check_consistency(&self, tol: f64) -> Result<f64> {
        let fresh = full_loglik(&self.params, &self.traj)?.value + self.priors.ln_density(&self.params);
        let drift = (fresh - self.log_posterior()).abs();
        if drift > tol * (1.0 + fresh.abs()) {
            return Err(Error::ImpossibleState(format!(
                "cached log posterior {} drifted from {} by {drift}",
                self.log_posterior(),
                fresh
            )));
        }
        Ok(drift)
    }

    /// Recompute every cached likelihood term under the current parameters.
    fn rebuild_caches(&mut self) {
        let (kernel, traj) = (&self.params.kernel, &self.traj);
        self.terms = (0..traj.len())
            .map(|x| host_terms_with_exposure(kernel, traj, x, traj.host(x).exposure))
            .collect();
        self.latent = self.params.latent.distribution().expect("validated");
        self.latent_terms = (0..traj.len())
            .map(|x| latent_term(&self.latent, traj, x, traj.host(x).exposure))
            .collect();
        self.trans_ll = self.sum_transmission(&self.terms, self.params.alpha, self.params.beta);
        self.latent_ll = self.latent_terms.iter().copied().collect::<CompensatedSum>().value();
        self.infectious_ll = self
            .infectious_summary
            .loglik(&self.params.infectious.distribution().expect("validated"));
    }

    fn sum_transmission(&self, terms: &[HostTerms], alpha: f64, beta: f64) -> f64 {
        terms.iter().map(|t| t.loglik(alpha, beta)).collect::<CompensatedSum>().value()
    }

    fn refresh_window(&mut self) {
        self.move_window = self
            .fixed_window
            .unwrap_or(self.params.latent.mean + 3.0 * self.params.latent.var.sqrt());
    }

    /// One full sweep: every parameter once, then the configured number of exposure updates.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, burn_in: bool) {
        if self.update_params {
            for p in Param::ALL {
                let accepted = self.update_param(p, rng);
                if burn_in && self.adapt {
                    self.adapt_scale(p, accepted);
                }
            }
        }
        if burn_in {
            self.refresh_window();
        }
        if self.augment {
            for _ in 0..self.exposure_updates {
                self.update_exposure(rng);
            }
        }
        self.iteration += 1;
        if cfg!(debug_assertions) && self.iteration % 1000 == 0 {
            if let Err(e) = self.check_consistency(1e-8) {
                panic!("{e}");
            }
        }
    }

    fn adapt_scale(&mut self, p: Param, accepted: bool) {
        let k = p.index();
        self.adapt_counts[k] += 1;
        let gain = (self.adapt_counts[k] as f64 + 1.0).powf(-0.6);
        let signal = if accepted { 1.0 } else { 0.0 } - TARGET_ACCEPTANCE;
        self.log_scales[k] = (self.log_scales[k] + gain * signal).clamp(LOG_SCALE_BOUNDS.0, LOG_SCALE_BOUNDS.1);
    }

    /// Log-scale random-walk Metropolis–Hastings update of one parameter.
    pub fn update_param<R: Rng + ?Sized>(&mut self, p: Param, rng: &mut R) -> bool {
        let k = p.index();
        self.stats.param_proposed[k] += 1;
        let old = self.params.get(p);
        let z: f64 = StandardNormal.sample(rng);
        let new = old * (self.log_scales[k].exp() * z).exp();
        let cand = self.params.with(p, new);
        if !(new.is_finite() && new > 0.0) || cand.validate().is_err() {
            return false;
        }
        let prior_delta = self.priors.get(p).ln_density(new) - self.priors.get(p).ln_density(old);
        if prior_delta == f64::NEG_INFINITY {
            return false;
        }
        // Jacobian of the log transform
        let jacobian = new.ln() - old.ln();
        if self.prior_only {
            if accept(prior_delta + jacobian, rng) {
                self.params = cand;
                self.log_prior = self.priors.ln_density(&cand);
                self.stats.param_accepted[k] += 1;
                // keep the reported posterior exact even though it is not targeted
                self.rebuild_caches();
                return true;
            }
            return false;
        }
        let accepted = match p {
            Param::Alpha | Param::Beta => {
                let trans = self.sum_transmission(&self.terms, cand.alpha, cand.beta);
                let ok = accept(trans - self.trans_ll + prior_delta + jacobian, rng);
                if ok {
                    self.trans_ll = trans;
                }
                ok
            }
            Param::Kappa => {
                let terms: Vec<HostTerms> = (0..self.traj.len())
                    .map(|x| host_terms_with_exposure(&cand.kernel, &self.traj, x, self.traj.host(x).exposure))
                    .collect();
                let trans = self.sum_transmission(&terms, cand.alpha, cand.beta);
                let ok = accept(trans - self.trans_ll + prior_delta + jacobian, rng);
                if ok {
                    self.terms = terms;
                    self.trans_ll = trans;
                }
                ok
            }
            Param::LatentMean | Param::LatentVar => {
                let dist = cand.latent.distribution().expect("validated");
                let terms: Vec<f64> = (0..self.traj.len())
                    .map(|x| latent_term(&dist, &self.traj, x, self.traj.host(x).exposure))
                    .collect();
                let ll = terms.iter().copied().collect::<CompensatedSum>().value();
                let ok = accept(ll - self.latent_ll + prior_delta + jacobian, rng);
                if ok {
                    self.latent = dist;
                    self.latent_terms = terms;
                    self.latent_ll = ll;
                }
                ok
            }
            Param::InfectiousMean | Param::InfectiousVar => {
                let dist = cand.infectious.distribution().expect("validated");
                let ll = self.infectious_summary.loglik(&dist);
                let ok = accept(ll - self.infectious_ll + prior_delta + jacobian, rng);
                if ok {
                    self.infectious_ll = ll;
                }
                ok
            }
        };
        if accepted {
            self.params = cand;
            self.log_prior = self.priors.ln_density(&cand);
            self.stats.param_accepted[k] += 1;
        }
        accepted
    }

    /// Change of the log likelihood if host `x` had exposure `exposure` instead.
    fn exposure_delta(&self, x: HostId, exposure: Option<f64>) -> (f64, HostTerms, f64) {
        let terms = host_terms_with_exposure(&self.params.kernel, &self.traj, x, exposure);
        let latent = latent_term(&self.latent, &self.traj, x, exposure);
        let (a, b) = (self.params.alpha, self.params.beta);
        let delta = (terms.loglik(a, b) - self.terms[x].loglik(a, b)) + (latent - self.latent_terms[x]);
        (delta, terms, latent)
    }

    fn commit_exposure(&mut self, x: HostId, exposure: Option<f64>, terms: HostTerms, latent: f64) {
        self.traj.set_exposure(x, exposure);
        self.terms[x] = terms;
        self.latent_terms[x] = latent;
        self.trans_ll = self.sum_transmission(&self.terms, self.params.alpha, self.params.beta);
        self.latent_ll = self.latent_terms.iter().copied().collect::<CompensatedSum>().value();
    }

    /// One MOVE, ADD or DELETE update, chosen uniformly.
    pub fn update_exposure<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (MoveKind, bool) {
        let kind = MoveKind::ALL[rng.random_range(0..3)];
        let accepted = match kind {
            MoveKind::Move => self.move_exposure(rng),
            MoveKind::Add => self.add_occult(rng),
            MoveKind::Delete => self.delete_occult(rng),
        };
        self.stats.move_proposed[kind.index()] += 1;
        if accepted {
            self.stats.move_accepted[kind.index()] += 1;
        }
        (kind, accepted)
    }

    /// Redraw the exposure time of an observed infection uniformly on the window
    /// `(max(0, t_I - w), t_I)`. The proposal does not depend on the current time,
    /// so the ratio is the target ratio whenever the current time is in the window.
    pub fn move_exposure<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.movable.is_empty() {
            return false;
        }
        let x = self.movable[rng.random_range(0..self.movable.len())];
        let t_inf = self.traj.host(x).infection.unwrap();
        let current = self.traj.host(x).exposure.unwrap();
        let lo = (t_inf - self.move_window).max(0.0);
        if !(current > lo && current < t_inf) {
            return false;
        }
        let proposal = lo + (t_inf - lo) * open_unit(rng);
        if !(proposal > lo && proposal < t_inf) {
            return false;
        }
        let (delta, terms, latent) = self.exposure_delta(x, Some(proposal));
        if accept(delta, rng) {
            self.commit_exposure(x, Some(proposal), terms, latent);
            true
        } else {
            false
        }
    }

    /// Give a host with nothing observed an occult exposure, uniform on `(0, T)`.
    pub fn add_occult<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let Some(x) = self.free.pick(rng) else {
            return false;
        };
        let t_max = self.traj.t_max();
        let proposal = t_max * open_unit(rng);
        if !(proposal > 0.0 && proposal < t_max) {
            return false;
        }
        let (delta, terms, latent) = self.exposure_delta(x, Some(proposal));
        // reverse move picks one of the occult exposures after the addition
        let jump = (self.free.len() as f64 * t_max).ln() - ((self.occult.len() + 1) as f64).ln();
        if accept(delta + jump, rng) {
            self.commit_exposure(x, Some(proposal), terms, latent);
            self.free.remove(x);
            self.occult.insert(x);
            true
        } else {
            false
        }
    }

    /// Remove a random occult exposure.
    pub fn delete_occult<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let Some(x) = self.occult.pick(rng) else {
            return false;
        };
        let t_max = self.traj.t_max();
        let (delta, terms, latent) = self.exposure_delta(x, None);
        let jump = (self.occult.len() as f64).ln() - ((self.free.len() + 1) as f64 * t_max).ln();
        if accept(delta + jump, rng) {
            self.commit_exposure(x, None, terms, latent);
            self.occult.remove(x);
            self.free.insert(x);
            true
        } else {
            false
        }
    }
}

fn latent_term(dist: &GammaSojourn, traj: &Trajectory, x: HostId, exposure: Option<f64>) -> f64 {
    let h = traj.host(x);
    if h.is_seed() {
        return 0.0;
    }
    match (exposure, h.infection) {
        (None, _) => 0.0,
        (Some(e), Some(i)) => dist.ln_pdf(i - e),
        (Some(e), None) => dist.ln_sf(traj.t_max() - e),
    }
}

/// Maximise the transmission likelihood of `traj` over `(alpha, beta, kappa)` on the
/// log scale, starting from `params`. Falls back to `params` if nothing better is found.
fn fit_transmission_start(traj: &Trajectory, params: ModelParams) -> ModelParams {
    let summary = TransmissionSummary::new(traj);
    let family = params.kernel.family;
    let objective = |v: &[f64]| match KernelSpec::new(family, v[2].exp()) {
        Ok(k) => summary.loglik(&k, v[0].exp(), v[1].exp()).value,
        Err(_) => f64::NEG_INFINITY,
    };
    let x0 = [params.alpha.ln(), params.beta.ln(), params.kernel.kappa.ln()];
    if x0.iter().any(|v| !v.is_finite()) {
        return params;
    }
    let start_value = objective(&x0);
    let opts = NelderMeadOptions {
        simplex_tol: 1e-6,
        max_evals: 3_000,
    };
    let opt = maximize(objective, &x0, &[0.5, 0.5, 0.5], &opts);
    if opt.value.is_finite() && !(opt.value < start_value) {
        let mut p = params;
        p.alpha = opt.x[0].exp();
        p.beta = opt.x[1].exp();
        p.kernel.kappa = opt.x[2].exp();
        if p.validate().is_ok() {
            return p;
        }
    }
    params
}
