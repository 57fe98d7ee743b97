//! Exact simulation of the spatial SEIR process.
//!
//! Two generators share one event engine:
//!
//! * [`simulate`] draws the next exposure as `Exp(total pressure)` and races it against
//!   the next scheduled E to I / I to R transition.
//! * [`functional_map`] is the deterministic map from four uniform streams: `r1` gives
//!   the integrated hazard to the next exposure, `r2` selects the responsible link by
//!   the ordered cumulative-weight rule, `r3`/`r4` are the quantiles of the E and I
//!   sojourns.
//!
//! Both produce the same law on trajectories.

mod links;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaSojourn;
use crate::model::{HostEvents, HostId, HostPopulation, ModelParams, Trajectory};

pub use links::{link_interval, link_weight, ordered_links, select_link, tied_link_interval, Link, Source};

/// When to stop simulating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Run until every host has been infected and every scheduled transition has
    /// happened; the horizon is the last event time.
    FullInfection,
    /// Run up to a fixed horizon; later events are censored.
    Horizon(f64),
}

/// Initial state of the population.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Everyone susceptible; the epidemic starts by background infection.
    #[default]
    AllSusceptible,
    /// These hosts are infectious at time zero.
    Seeded(Vec<HostId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub stop: StopRule,
    pub initial: InitialCondition,
}

impl SimulationOptions {
    pub fn full_infection() -> Self {
        Self {
            stop: StopRule::FullInfection,
            initial: InitialCondition::AllSusceptible,
        }
    }

    pub fn horizon(t_max: f64) -> Self {
        Self {
            stop: StopRule::Horizon(t_max),
            initial: InitialCondition::AllSusceptible,
        }
    }
}

/// Four uniform streams driving [`functional_map`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentStreams {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub r4: Vec<f64>,
}

impl LatentStreams {
    /// i.i.d. `U(0,1)` streams of length `len` (strictly inside the unit interval).
    pub fn generate<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut draw = || (0..len).map(|_| open_unit(rng)).collect::<Vec<_>>();
        Self {
            r1: draw(),
            r2: draw(),
            r3: draw(),
            r4: draw(),
        }
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TransitionKind {
    BecomeInfectious,
    Remove,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    host: HostId,
    kind: TransitionKind,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // reversed: BinaryHeap is a max-heap and we want the earliest event (ties by host id)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.host.cmp(&self.host))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Susceptible,
    Exposed,
    Infectious,
    Removed,
}

/// Mutable epidemic state shared by both generators.
struct Engine<'a> {
    params: &'a ModelParams,
    pop: &'a Arc<HostPopulation>,
    latent: GammaSojourn,
    infectious_dist: GammaSojourn,
    status: Vec<Status>,
    events: Vec<HostEvents>,
    /// kernel sum from the current infectious set, kept for susceptible hosts
    pressure: Vec<f64>,
    susceptible: Vec<HostId>,
    infectious: Vec<HostId>,
    pending: BinaryHeap<Pending>,
    time: f64,
    last_event: f64,
}

impl<'a> Engine<'a> {
    fn new(params: &'a ModelParams, pop: &'a Arc<HostPopulation>, initial: &InitialCondition) -> Result<Self> {
        params.validate()?;
        let n = pop.len();
        let mut engine = Self {
            params,
            pop,
            latent: params.latent.distribution()?,
            infectious_dist: params.infectious.distribution()?,
            status: vec![Status::Susceptible; n],
            events: vec![HostEvents::NEVER; n],
            pressure: vec![0.0; n],
            susceptible: (0..n).collect(),
            infectious: Vec::new(),
            pending: BinaryHeap::new(),
            time: 0.0,
            last_event: 0.0,
        };
        if let InitialCondition::Seeded(seeds) = initial {
            for &h in seeds {
                if h >= n {
                    return Err(Error::domain(format!("seed host {h} out of range")));
                }
                if engine.status[h] != Status::Susceptible {
                    return Err(Error::domain(format!("seed host {h} listed twice")));
                }
                engine.status[h] = Status::Exposed;
                engine.events[h].exposure = Some(0.0);
                engine.susceptible.retain(|&x| x != h);
            }
        }
        if params.alpha <= 0.0 && !matches!(initial, InitialCondition::Seeded(s) if !s.is_empty()) {
            return Err(Error::domain(
                "alpha = 0 requires at least one initial infectious host",
            ));
        }
        Ok(engine)
    }

    fn total_pressure(&self) -> f64 {
        let kernel_part: f64 = self.susceptible.iter().map(|&x| self.pressure[x]).sum();
        self.susceptible.len() as f64 * self.params.alpha + self.params.beta * kernel_part
    }

    fn host_rate(&self, x: HostId) -> f64 {
        self.params.alpha + self.params.beta * self.pressure[x]
    }

    fn expose(&mut self, x: HostId, t: f64, latent_sojourn: f64) {
        debug_assert_eq!(self.status[x], Status::Susceptible);
        self.status[x] = Status::Exposed;
        self.events[x].exposure = Some(t);
        self.susceptible.retain(|&h| h != x);
        self.pending.push(Pending {
            time: t + latent_sojourn,
            host: x,
            kind: TransitionKind::BecomeInfectious,
        });
        self.last_event = t;
    }

    /// Make seeds infectious at time zero; their I sojourns come from `sojourn`.
    fn start_seeds(&mut self, mut sojourn: impl FnMut(usize) -> Result<f64>) -> Result<usize> {
        let seeds: Vec<HostId> = (0..self.status.len())
            .filter(|&h| self.status[h] == Status::Exposed)
            .collect();
        for (k, &h) in seeds.iter().enumerate() {
            let s = sojourn(k)?;
            self.become_infectious(h, 0.0, s);
        }
        Ok(seeds.len())
    }

    fn become_infectious(&mut self, h: HostId, t: f64, infectious_sojourn: f64) {
        self.status[h] = Status::Infectious;
        self.events[h].infection = Some(t);
        self.infectious.push(h);
        for &x in &self.susceptible {
            self.pressure[x] += self.params.kernel.value(self.pop.distance(x, h));
        }
        self.pending.push(Pending {
            time: t + infectious_sojourn,
            host: h,
            kind: TransitionKind::Remove,
        });
        self.last_event = t;
    }

    fn remove(&mut self, h: HostId, t: f64) {
        self.status[h] = Status::Removed;
        self.events[h].removal = Some(t);
        self.infectious.retain(|&y| y != h);
        if self.infectious.is_empty() {
            for p in &mut self.pressure {
                *p = 0.0;
            }
        } else {
            for &x in &self.susceptible {
                let v = self.pressure[x] - self.params.kernel.value(self.pop.distance(x, h));
                self.pressure[x] = v.max(0.0);
            }
        }
        self.last_event = t;
    }

    fn apply_transition(&mut self, p: Pending, infectious_sojourn: impl FnOnce() -> Result<f64>) -> Result<()> {
        self.time = p.time;
        match p.kind {
            TransitionKind::BecomeInfectious => {
                let s = infectious_sojourn()?;
                self.become_infectious(p.host, p.time, s);
            }
            TransitionKind::Remove => self.remove(p.host, p.time),
        }
        Ok(())
    }

    fn finish(self, stop: StopRule) -> Result<Trajectory> {
        let t_max = match stop {
            StopRule::Horizon(t) => t,
            StopRule::FullInfection => self.last_event,
        };
        Trajectory::new(self.pop.clone(), self.events, t_max)
    }

    fn extinction(&self) -> Error {
        let infected = self.status.iter().filter(|s| **s != Status::Susceptible).count();
        Error::Extinction {
            time: self.time,
            infected,
            population: self.status.len(),
        }
    }
}

fn horizon_of(stop: StopRule) -> f64 {
    match stop {
        StopRule::Horizon(t) => t,
        StopRule::FullInfection => f64::INFINITY,
    }
}

fn check_stop(stop: StopRule) -> Result<()> {
    if let StopRule::Horizon(t) = stop {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::domain(format!("horizon {t} must be finite and >= 0")));
        }
    }
    Ok(())
}

/// Direct event-driven simulation.
pub fn simulate<R: Rng + ?Sized>(
    params: &ModelParams,
    pop: &Arc<HostPopulation>,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    check_stop(options.stop)?;
    let horizon = horizon_of(options.stop);
    let mut eng = Engine::new(params, pop, &options.initial)?;
    let inf_dist = eng.infectious_dist;
    eng.start_seeds(|_| Ok(inf_dist.sample(rng)))?;

    loop {
        let total = eng.total_pressure();
        let next = eng.pending.peek().copied();
        let t_exposure = if total > 0.0 {
            let e: f64 = Exp1.sample(rng);
            eng.time + e / total
        } else {
            f64::INFINITY
        };
        let t_transition = next.map_or(f64::INFINITY, |p| p.time);
        if t_exposure.is_infinite() && t_transition.is_infinite() {
            if eng.susceptible.is_empty() || options.stop != StopRule::FullInfection {
                break;
            }
            return Err(eng.extinction());
        }
        if t_exposure < t_transition {
            if t_exposure > horizon {
                break;
            }
            // pick the exposed host with probability proportional to its rate
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = *eng.susceptible.last().unwrap();
            for &x in &eng.susceptible {
                acc += eng.host_rate(x);
                if acc > target {
                    chosen = x;
                    break;
                }
            }
            eng.time = t_exposure;
            let s = eng.latent.sample(rng);
            eng.expose(chosen, t_exposure, s);
        } else {
            if t_transition > horizon {
                break;
            }
            let p = eng.pending.pop().unwrap();
            eng.apply_transition(p, || Ok(inf_dist.sample(rng)))?;
        }
    }
    eng.finish(options.stop)
}

/// Deterministic map from parameters and four uniform streams to a trajectory.
pub fn functional_map(
    params: &ModelParams,
    pop: &Arc<HostPopulation>,
    options: &SimulationOptions,
    streams: &LatentStreams,
) -> Result<Trajectory> {
    check_stop(options.stop)?;
    let horizon = horizon_of(options.stop);
    let mut eng = Engine::new(params, pop, &options.initial)?;
    let latent = eng.latent;
    let inf_dist = eng.infectious_dist;

    let take = |stream: &'static str, v: &[f64], k: usize| -> Result<f64> {
        v.get(k)
            .copied()
            .ok_or(Error::StreamExhausted { stream, used: k })
    };
    let n_seeds = eng.start_seeds(|k| inf_dist.quantile(take("r4", &streams.r4, k)?))?;
    // the host that became exposed j-th uses r3[j] and r4[n_seeds + j]
    let mut exposure_rank = vec![usize::MAX; pop.len()];
    let mut j = 0usize;

    'exposures: loop {
        if eng.susceptible.is_empty() {
            // drain the remaining transitions
            while let Some(p) = eng.pending.peek().copied() {
                if p.time > horizon {
                    break;
                }
                let p = eng.pending.pop().unwrap();
                let rank = exposure_rank[p.host];
                eng.apply_transition(p, || inf_dist.quantile(take("r4", &streams.r4, n_seeds + rank)?))?;
            }
            break;
        }
        let r1 = take("r1", &streams.r1, j)?;
        let mut hazard = -(-r1).ln_1p();
        loop {
            let total = eng.total_pressure();
            let next = eng.pending.peek().copied();
            let t_transition = next.map_or(f64::INFINITY, |p| p.time);
            let t_exposure = if total > 0.0 {
                eng.time + hazard / total
            } else {
                f64::INFINITY
            };
            if t_exposure.is_infinite() && t_transition.is_infinite() {
                if options.stop == StopRule::FullInfection {
                    return Err(eng.extinction());
                }
                break 'exposures;
            }
            if t_exposure < t_transition {
                if t_exposure > horizon {
                    break 'exposures;
                }
                let u = take("r2", &streams.r2, j)?;
                let link = select_link(params, pop, &eng.susceptible, &eng.infectious, u)?;
                let s = latent.quantile(take("r3", &streams.r3, j)?)?;
                eng.time = t_exposure;
                exposure_rank[link.exposed] = j;
                eng.expose(link.exposed, t_exposure, s);
                j += 1;
                continue 'exposures;
            }
            if t_transition > horizon {
                break 'exposures;
            }
            hazard -= total * (t_transition - eng.time);
            let p = eng.pending.pop().unwrap();
            let rank = exposure_rank[p.host];
            eng.apply_transition(p, || inf_dist.quantile(take("r4", &streams.r4, n_seeds + rank)?))?;
        }
    }
    eng.finish(options.stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelFamily, KernelSpec, Param};
    use crate::numeric::mean_and_se;
    use crate::rng::rng_from_seed;

    fn small_population(n: usize, seed: u64) -> Arc<HostPopulation> {
        let mut rng = rng_from_seed(seed);
        Arc::new(HostPopulation::uniform(n, 200.0, &mut rng).unwrap())
    }

    #[test]
    fn single_host_exposure_is_exponential() {
        let alpha = 0.5;
        let p = ModelParams::original().with(Param::Alpha, alpha);
        let pop = Arc::new(HostPopulation::new(vec![[1.0, 1.0]], 2.0).unwrap());
        let mut rng = rng_from_seed(1);
        let times: Vec<f64> = (0..10_000)
            .map(|_| {
                let t = simulate(&p, &pop, &SimulationOptions::full_infection(), &mut rng).unwrap();
                t.host(0).exposure.unwrap()
            })
            .collect();
        let (mean, se) = mean_and_se(&times);
        assert!((mean - 1.0 / alpha).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn latent_sojourn_mean_matches_baseline() {
        let p = ModelParams::original();
        let pop = small_population(60, 2);
        let mut rng = rng_from_seed(2);
        let mut sojourns = Vec::new();
        for _ in 0..20 {
            let t = simulate(&p, &pop, &SimulationOptions::full_infection(), &mut rng).unwrap();
            for h in t.hosts() {
                sojourns.push(h.infection.unwrap() - h.exposure.unwrap());
            }
        }
        let (mean, se) = mean_and_se(&sojourns);
        assert!((mean - 5.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let p = ModelParams::original();
        let pop = small_population(40, 3);
        let a = simulate(&p, &pop, &SimulationOptions::full_infection(), &mut rng_from_seed(9)).unwrap();
        let b = simulate(&p, &pop, &SimulationOptions::full_infection(), &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.hosts().iter().all(|h| h.removal.is_some()));
        assert_eq!(a.t_max(), a.hosts().iter().map(|h| h.removal.unwrap()).fold(0.0, f64::max));
    }

    #[test]
    fn horizon_censors_events() {
        let p = ModelParams::original().with(Param::Alpha, 0.01);
        let pop = small_population(30, 4);
        let t = simulate(&p, &pop, &SimulationOptions::horizon(20.0), &mut rng_from_seed(4)).unwrap();
        assert_eq!(t.t_max(), 20.0);
        assert!(t.check_structure().is_ok());
        assert!(t.exposed_count() < 30);
    }

    #[test]
    fn extinction_is_reported() {
        // alpha = 0, one seed, no secondary transmission possible
        let p = ModelParams::original().with(Param::Alpha, 0.0).with(Param::Beta, 0.0);
        let pop = small_population(5, 5);
        let opts = SimulationOptions {
            stop: StopRule::FullInfection,
            initial: InitialCondition::Seeded(vec![0]),
        };
        let err = simulate(&p, &pop, &opts, &mut rng_from_seed(5)).unwrap_err();
        assert!(matches!(err, Error::Extinction { infected: 1, population: 5, .. }));
        let err = simulate(&p, &pop, &SimulationOptions::full_infection(), &mut rng_from_seed(5));
        assert!(err.is_err());
    }

    #[test]
    fn median_quantile_stream_gives_median_sojourns() {
        let p = ModelParams::original();
        let pop = small_population(10, 6);
        let mut streams = LatentStreams::generate(10, &mut rng_from_seed(6));
        streams.r3 = vec![0.5; 10];
        let t = functional_map(&p, &pop, &SimulationOptions::full_infection(), &streams).unwrap();
        let median = p.latent.distribution().unwrap().quantile(0.5).unwrap();
        for h in t.hosts() {
            let s = h.infection.unwrap() - h.exposure.unwrap();
            assert!((s - median).abs() < 1e-9 * median);
        }
    }

    #[test]
    fn last_susceptible_is_exposed_whatever_r2() {
        let p = ModelParams::original();
        let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0]], 1.0).unwrap());
        for u in [1e-9, 0.5, 1.0 - 1e-12] {
            let mut streams = LatentStreams::generate(1, &mut rng_from_seed(7));
            streams.r2 = vec![u];
            let t = functional_map(&p, &pop, &SimulationOptions::full_infection(), &streams).unwrap();
            assert!(t.host(0).exposure.is_some());
        }
    }

    #[test]
    fn functional_map_is_deterministic_and_checks_streams() {
        let p = ModelParams {
            kernel: KernelSpec::new(KernelFamily::PowerLaw, 2.0).unwrap(),
            ..ModelParams::original()
        };
        let pop = small_population(12, 8);
        let streams = LatentStreams::generate(12, &mut rng_from_seed(8));
        let a = functional_map(&p, &pop, &SimulationOptions::full_infection(), &streams).unwrap();
        let b = functional_map(&p, &pop, &SimulationOptions::full_infection(), &streams).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.exposed_count(), 12);
        let short = LatentStreams::generate(5, &mut rng_from_seed(8));
        assert!(matches!(
            functional_map(&p, &pop, &SimulationOptions::full_infection(), &short),
            Err(Error::StreamExhausted { .. })
        ));
    }

    #[test]
    fn primary_only_gaps_are_exponential_in_susceptible_count() {
        // beta = 0: gap after k exposures is Exp((N - k) alpha); scaled gaps are Exp(1)
        let alpha = 0.2;
        let n = 8;
        let p = ModelParams::original().with(Param::Alpha, alpha).with(Param::Beta, 0.0);
        let pop = small_population(n, 10);
        let mut rng = rng_from_seed(10);
        let mut scaled = Vec::new();
        for _ in 0..2_000 {
            let t = simulate(&p, &pop, &SimulationOptions::full_infection(), &mut rng).unwrap();
            let mut times: Vec<f64> = t.hosts().iter().map(|h| h.exposure.unwrap()).collect();
            times.sort_by(f64::total_cmp);
            let mut prev = 0.0;
            for (k, &e) in times.iter().enumerate() {
                scaled.push((e - prev) * (n - k) as f64 * alpha);
                prev = e;
            }
        }
        // Exp(1): P(X > 1) = e^-1
        let frac = scaled.iter().filter(|&&g| g > 1.0).count() as f64 / scaled.len() as f64;
        let se = ((-1f64).exp() * (1.0 - (-1f64).exp()) / scaled.len() as f64).sqrt();
        assert!((frac - (-1f64).exp()).abs() < 4.0 * se, "frac {frac}");
        let (mean, se) = mean_and_se(&scaled);
        assert!((mean - 1.0).abs() < 4.0 * se);
    }

    #[test]
    fn seeded_host_starts_infectious() {
        let p = ModelParams::original().with(Param::Alpha, 0.0).with(Param::Beta, 50.0);
        let pop = small_population(6, 12);
        let opts = SimulationOptions {
            stop: StopRule::Horizon(30.0),
            initial: InitialCondition::Seeded(vec![2]),
        };
        let t = simulate(&p, &pop, &opts, &mut rng_from_seed(12)).unwrap();
        assert!(t.host(2).is_seed());
        assert_eq!(t.seeds(), vec![2]);
        assert!(t.check_positive_rates(0.0).is_ok());
        let streams = LatentStreams::generate(6, &mut rng_from_seed(13));
        let f = functional_map(&p, &pop, &opts, &streams).unwrap();
        assert!(f.host(2).is_seed());
        assert!(f.check_positive_rates(0.0).is_ok());
    }
}
