use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::population::{HostId, HostPopulation};

/// Event times of one host. `None` means the event never happened before the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HostEvents {
    pub exposure: Option<f64>,
    pub infection: Option<f64>,
    pub removal: Option<f64>,
}

impl HostEvents {
    pub const NEVER: HostEvents = HostEvents {
        exposure: None,
        infection: None,
        removal: None,
    };

    /// Initial infective: infectious from time zero. Its exposure is part of the
    /// initial condition, not an exposure event.
    pub fn is_seed(&self) -> bool {
        self.infection == Some(0.0)
    }

    /// Exposed during the observation period (excludes seeds).
    pub fn exposure_event(&self) -> Option<f64> {
        if self.is_seed() {
            None
        } else {
            self.exposure
        }
    }

    /// Member of `I(t-)`: infectious strictly before `t` and not removed before `t`.
    #[inline]
    pub fn infectious_before(&self, t: f64) -> bool {
        match self.infection {
            Some(i) => i < t && self.removal.map_or(true, |r| r >= t),
            None => false,
        }
    }

    /// Member of `S(t-)`: not exposed strictly before `t`.
    #[inline]
    pub fn susceptible_before(&self, t: f64) -> bool {
        self.exposure.map_or(true, |e| e >= t)
    }

    fn check_order(&self, h: HostId, t_max: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidTrajectory(format!("host {h}: {msg}")));
        for (name, v) in [
            ("exposure", self.exposure),
            ("infection", self.infection),
            ("removal", self.removal),
        ] {
            if let Some(t) = v {
                if !(t.is_finite() && t >= 0.0 && t <= t_max) {
                    return fail(format!("{name} time {t} outside [0, {t_max}]"));
                }
            }
        }
        match (self.exposure, self.infection, self.removal) {
            (None, Some(_), _) | (_, None, Some(_)) => {
                fail("later event defined without the earlier one".into())
            }
            (Some(e), Some(i), _) if i < e => fail(format!("infection {i} before exposure {e}")),
            (_, Some(i), Some(r)) if r < i => fail(format!("removal {r} before infection {i}")),
            _ => {
                if self.is_seed() && self.exposure != Some(0.0) {
                    return fail("initial infective must have exposure time 0".into());
                }
                Ok(())
            }
        }
    }
}

/// Complete event log of an epidemic on `[0, t_max]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    population: Arc<HostPopulation>,
    hosts: Vec<HostEvents>,
    t_max: f64,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.t_max == other.t_max
            && self.hosts == other.hosts
            && (Arc::ptr_eq(&self.population, &other.population)
                || self.population.coords() == other.population.coords())
    }
}

impl Trajectory {
    pub fn new(population: Arc<HostPopulation>, hosts: Vec<HostEvents>, t_max: f64) -> Result<Self> {
        if hosts.len() != population.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} host records for a population of {}",
                hosts.len(),
                population.len()
            )));
        }
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(Error::InvalidTrajectory(format!("horizon {t_max} must be finite and >= 0")));
        }
        let traj = Self {
            population,
            hosts,
            t_max,
        };
        traj.check_structure()?;
        Ok(traj)
    }

    pub fn check_structure(&self) -> Result<()> {
        self.hosts
            .iter()
            .enumerate()
            .try_for_each(|(h, ev)| ev.check_order(h, self.t_max))
    }

    /// Checks that no exposure happens at zero pressure when `alpha == 0`.
    pub fn check_positive_rates(&self, alpha: f64) -> Result<()> {
        if alpha > 0.0 {
            return Ok(());
        }
        for h in self.exposure_order() {
            let t = self.hosts[h].exposure.unwrap();
            if !self.hosts.iter().any(|y| y.infectious_before(t)) {
                return Err(Error::InvalidTrajectory(format!(
                    "host {h} exposed at {t} with no infectious hosts and alpha = 0"
                )));
            }
        }
        Ok(())
    }

    pub fn population(&self) -> &Arc<HostPopulation> {
        &self.population
    }

    pub fn hosts(&self) -> &[HostEvents] {
        &self.hosts
    }

    pub fn host(&self, h: HostId) -> &HostEvents {
        &self.hosts[h]
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Replace the exposure time of one host. Only the owning sampler calls this.
    pub(crate) fn set_exposure(&mut self, h: HostId, exposure: Option<f64>) {
        self.hosts[h].exposure = exposure;
        debug_assert!(self.hosts[h].check_order(h, self.t_max).is_ok());
    }

    /// Non-seed exposed hosts in event order; ties broken by host id.
    pub fn exposure_order(&self) -> Vec<HostId> {
        let mut order: Vec<HostId> = (0..self.hosts.len())
            .filter(|&h| self.hosts[h].exposure_event().is_some())
            .collect();
        order.sort_by(|&a, &b| cmp_event(self.hosts[a].exposure, a, self.hosts[b].exposure, b));
        order
    }

    /// Hosts entering I in time order (seeds first), ties by host id.
    pub fn infection_order(&self) -> Vec<HostId> {
        let mut order: Vec<HostId> = (0..self.hosts.len())
            .filter(|&h| self.hosts[h].infection.is_some())
            .collect();
        order.sort_by(|&a, &b| cmp_event(self.hosts[a].infection, a, self.hosts[b].infection, b));
        order
    }

    pub fn seeds(&self) -> Vec<HostId> {
        (0..self.hosts.len()).filter(|&h| self.hosts[h].is_seed()).collect()
    }

    pub fn exposed_count(&self) -> usize {
        self.hosts.iter().filter(|h| h.exposure.is_some()).count()
    }

    pub fn infected_count(&self) -> usize {
        self.hosts.iter().filter(|h| h.infection.is_some()).count()
    }

    pub fn infectious_before(&self, t: f64) -> Vec<HostId> {
        (0..self.hosts.len())
            .filter(|&h| self.hosts[h].infectious_before(t))
            .collect()
    }

    /// Hosts exposed with nothing observed by the horizon.
    pub fn occult_exposures(&self) -> Vec<HostId> {
        (0..self.hosts.len())
            .filter(|&h| self.hosts[h].exposure.is_some() && self.hosts[h].infection.is_none())
            .collect()
    }

    /// Same epidemic observed only up to `t_cut`; later events are censored.
    pub fn censor(&self, t_cut: f64) -> Result<Trajectory> {
        if !(t_cut >= 0.0 && t_cut <= self.t_max) {
            return Err(Error::domain(format!(
                "censoring time {t_cut} outside [0, {}]",
                self.t_max
            )));
        }
        let keep = |v: Option<f64>| v.filter(|&t| t <= t_cut);
        let hosts = self
            .hosts
            .iter()
            .map(|h| HostEvents {
                exposure: keep(h.exposure),
                infection: keep(h.infection),
                removal: keep(h.removal),
            })
            .collect();
        Trajectory::new(self.population.clone(), hosts, t_cut)
    }

    /// Observation window closing when `ceil(fraction * N)` hosts have entered I.
    pub fn truncate(&self, fraction: f64) -> Result<(ObservedData, f64)> {
        let t_cut = self.window_end(fraction)?;
        let censored = self.censor(t_cut)?;
        Ok((censored.observed(), t_cut))
    }

    /// Time at which `ceil(fraction * N)` hosts have entered I.
    pub fn window_end(&self, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::domain(format!("window fraction {fraction} outside (0, 1]")));
        }
        let needed = window_count(fraction, self.hosts.len());
        let order = self.infection_order();
        if order.len() < needed || needed == 0 {
            return Err(Error::WindowUnattainable {
                fraction,
                needed,
                available: order.len(),
            });
        }
        Ok(self.hosts[order[needed - 1]].infection.unwrap())
    }

    /// Drop exposure times.
    pub fn observed(&self) -> ObservedData {
        ObservedData {
            population: self.population.clone(),
            infection: self.hosts.iter().map(|h| h.infection).collect(),
            removal: self.hosts.iter().map(|h| h.removal).collect(),
            t_max: self.t_max,
        }
    }

    /// All event times multiplied by `factor > 0`.
    pub fn rescale_time(&self, factor: f64) -> Result<Trajectory> {
        let s = |v: Option<f64>| v.map(|t| t * factor);
        let hosts = self
            .hosts
            .iter()
            .map(|h| HostEvents {
                exposure: s(h.exposure),
                infection: s(h.infection),
                removal: s(h.removal),
            })
            .collect();
        Trajectory::new(self.population.clone(), hosts, self.t_max * factor)
    }

    /// Relabel hosts: new host `k` is old host `perm[k]`.
    pub fn permuted(&self, perm: &[HostId]) -> Result<Trajectory> {
        let pop = Arc::new(self.population.permuted(perm)?);
        let hosts = perm.iter().map(|&h| self.hosts[h]).collect();
        Trajectory::new(pop, hosts, self.t_max)
    }
}

/// `ceil(fraction * n)`, robust to representation error in `fraction`.
pub fn window_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

pub(crate) fn cmp_event(ta: Option<f64>, a: HostId, tb: Option<f64>, b: HostId) -> Ordering {
    let ta = ta.unwrap_or(f64::INFINITY);
    let tb = tb.unwrap_or(f64::INFINITY);
    ta.total_cmp(&tb).then(a.cmp(&b))
}

/// Observations `y`: infection (E to I) and removal (I to R) times up to `t_max`.
#[derive(Debug, Clone)]
pub struct ObservedData {
    population: Arc<HostPopulation>,
    infection: Vec<Option<f64>>,
    removal: Vec<Option<f64>>,
    t_max: f64,
}

impl ObservedData {
    pub fn new(
        population: Arc<HostPopulation>,
        infection: Vec<Option<f64>>,
        removal: Vec<Option<f64>>,
        t_max: f64,
    ) -> Result<Self> {
        let n = population.len();
        if infection.len() != n || removal.len() != n {
            return Err(Error::InvalidObservation(format!(
                "expected {n} host records, got {} infections and {} removals",
                infection.len(),
                removal.len()
            )));
        }
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(Error::InvalidObservation(format!("horizon {t_max} invalid")));
        }
        for h in 0..n {
            let within = |t: f64| t.is_finite() && t >= 0.0 && t <= t_max;
            match (infection[h], removal[h]) {
                (None, Some(r)) => {
                    return Err(Error::InvalidObservation(format!(
                        "host {h} removed at {r} without an infection"
                    )))
                }
                (Some(i), Some(r)) if r < i => {
                    return Err(Error::InvalidObservation(format!(
                        "host {h} removed at {r} before infection at {i}"
                    )))
                }
                (Some(i), r) => {
                    if !within(i) || r.is_some_and(|r| !within(r)) {
                        return Err(Error::InvalidObservation(format!(
                            "host {h} has an event outside [0, {t_max}]"
                        )));
                    }
                }
                (None, None) => {}
            }
        }
        Ok(Self {
            population,
            infection,
            removal,
            t_max,
        })
    }

    pub fn population(&self) -> &Arc<HostPopulation> {
        &self.population
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.infection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infection.is_empty()
    }

    pub fn infection(&self, h: HostId) -> Option<f64> {
        self.infection[h]
    }

    pub fn removal(&self, h: HostId) -> Option<f64> {
        self.removal[h]
    }

    pub fn infected_count(&self) -> usize {
        self.infection.iter().filter(|i| i.is_some()).count()
    }

    /// Does `traj` agree with these observations on every observed field?
    pub fn matches(&self, traj: &Trajectory) -> bool {
        traj.t_max() == self.t_max
            && traj.len() == self.len()
            && traj
                .hosts()
                .iter()
                .enumerate()
                .all(|(h, ev)| ev.infection == self.infection[h] && ev.removal == self.removal[h])
    }
}
