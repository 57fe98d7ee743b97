//! Sufficient summaries of a fixed trajectory, for repeated likelihood evaluation
//! at many parameter values (maximum likelihood fits).

use crate::gamma::GammaSojourn;
use crate::model::{KernelSpec, Trajectory};
use crate::numeric::CompensatedSum;

use super::LogLik;

#[derive(Debug, Clone, Copy)]
struct Pair {
    d: f64,
    ln_d: f64,
    weight: f64,
}

impl Pair {
    fn new(d: f64, weight: f64) -> Self {
        Self {
            d,
            ln_d: if d > 0.0 { d.ln() } else { f64::NEG_INFINITY },
            weight,
        }
    }

    #[inline]
    fn kernel(&self, kernel: &KernelSpec) -> f64 {
        kernel.value_with_ln(self.d, self.ln_d)
    }
}

/// Transmission log-likelihood of one trajectory as a function of `(alpha, beta, kernel)`.
///
/// Holds the total susceptible time, every (susceptible, infectious) pair with its
/// overlap time, and the distances to the infectious set at each exposure event.
#[derive(Debug, Clone)]
pub struct TransmissionSummary {
    susceptible_time: f64,
    overlaps: Vec<Pair>,
    exposure_pairs: Vec<Pair>,
    // exposure event k owns exposure_pairs[offsets[k]..offsets[k + 1]]
    offsets: Vec<usize>,
}

impl TransmissionSummary {
    pub fn new(traj: &Trajectory) -> Self {
        let hosts = traj.hosts();
        let pop = traj.population();
        let t_max = traj.t_max();
        let infected: Vec<usize> = (0..hosts.len()).filter(|&y| hosts[y].infection.is_some()).collect();
        let mut susceptible_time = CompensatedSum::new();
        let mut overlaps = Vec::new();
        let mut exposure_pairs = Vec::new();
        let mut offsets = vec![0];
        for (x, me) in hosts.iter().enumerate() {
            if me.is_seed() {
                continue;
            }
            let end = me.exposure.map_or(t_max, |e| e.min(t_max));
            susceptible_time.add(end);
            for &y in &infected {
                if y == x {
                    continue;
                }
                let other = &hosts[y];
                let start = other.infection.unwrap();
                if start >= end {
                    continue;
                }
                let stop = other.removal.map_or(end, |r| r.min(end));
                let d = pop.distance(x, y);
                if stop > start {
                    overlaps.push(Pair::new(d, stop - start));
                }
                if let Some(e) = me.exposure {
                    if other.infectious_before(e) {
                        exposure_pairs.push(Pair::new(d, 1.0));
                    }
                }
            }
            if me.exposure.is_some() {
                offsets.push(exposure_pairs.len());
            }
        }
        Self {
            susceptible_time: susceptible_time.value(),
            overlaps,
            exposure_pairs,
            offsets,
        }
    }

    pub fn exposure_events(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn susceptible_time(&self) -> f64 {
        self.susceptible_time
    }

    pub fn loglik(&self, kernel: &KernelSpec, alpha: f64, beta: f64) -> LogLik {
        let mut total = CompensatedSum::new();
        let mut zero = 0;
        for w in self.offsets.windows(2) {
            let s: f64 = self.exposure_pairs[w[0]..w[1]].iter().map(|p| p.kernel(kernel)).sum();
            let rate = alpha + beta * s;
            if rate > 0.0 {
                total.add(rate.ln());
            } else {
                zero += 1;
            }
        }
        let mut overlap = CompensatedSum::new();
        for p in &self.overlaps {
            overlap.add(p.kernel(kernel) * p.weight);
        }
        total.add(-alpha * self.susceptible_time);
        total.add(-beta * overlap.value());
        LogLik {
            value: if zero > 0 { f64::NEG_INFINITY } else { total.value() },
            zero_rate_events: zero,
        }
    }
}

/// Sojourn durations of one stage (latent or infectious) in a trajectory.
#[derive(Debug, Clone, Default)]
pub struct SojournSummary {
    completed: usize,
    sum: f64,
    sum_ln: f64,
    /// Lower bounds of sojourns still running at the horizon.
    censored: Vec<f64>,
}

impl SojournSummary {
    fn from_pairs(pairs: impl Iterator<Item = (f64, Option<f64>)>, t_max: f64) -> Self {
        let mut out = Self::default();
        let mut sum = CompensatedSum::new();
        let mut sum_ln = CompensatedSum::new();
        for (start, end) in pairs {
            match end {
                Some(end) => {
                    out.completed += 1;
                    sum.add(end - start);
                    sum_ln.add((end - start).ln());
                }
                None => out.censored.push(t_max - start),
            }
        }
        out.sum = sum.value();
        out.sum_ln = sum_ln.value();
        out
    }

    pub fn latent(traj: &Trajectory) -> Self {
        let pairs = traj
            .hosts()
            .iter()
            .filter_map(|h| h.exposure_event().map(|e| (e, h.infection)));
        Self::from_pairs(pairs, traj.t_max())
    }

    pub fn infectious(traj: &Trajectory) -> Self {
        let pairs = traj.hosts().iter().filter_map(|h| h.infection.map(|i| (i, h.removal)));
        Self::from_pairs(pairs, traj.t_max())
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn censored(&self) -> &[f64] {
        &self.censored
    }

    /// Mean of the completed durations, if any.
    pub fn completed_mean(&self) -> Option<f64> {
        (self.completed > 0).then(|| self.sum / self.completed as f64)
    }

    pub fn loglik(&self, dist: &GammaSojourn) -> f64 {
        let (a, b) = (dist.shape(), dist.rate());
        let ln_norm = a * b.ln() - statrs::function::gamma::ln_gamma(a);
        let mut total = CompensatedSum::new();
        if self.completed > 0 {
            total.add(self.completed as f64 * ln_norm);
            total.add((a - 1.0) * self.sum_ln);
            total.add(-b * self.sum);
        }
        for &c in &self.censored {
            total.add(dist.ln_sf(c));
        }
        total.value()
    }

    /// Log-likelihood at `(mean, var)`, `-inf` outside the parameter space.
    pub fn loglik_mean_var(&self, mean: f64, var: f64) -> f64 {
        match GammaSojourn::from_mean_var(mean, var) {
            Ok(d) => self.loglik(&d),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}
