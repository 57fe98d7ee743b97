//! Partial likelihood of the exposure sequence.
//!
//! For each exposure event the factor is the probability that the exposed host was
//! the one chosen, given the susceptible and infectious sets just before it:
//!
//! ```text
//! (alpha + beta * sum_{y in I} K(d(y, x_j))) / (|S| alpha + beta * sum_{x in S, y in I} K(d(y, x)))
//! ```
//!
//! Only the sets enter, never the event times.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{HostId, HostPopulation, KernelSpec, Trajectory};
use crate::numeric::CompensatedSum;

use super::LogLik;

/// Susceptible and infectious sets just before one exposure, and who was exposed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialEvent {
    pub susceptible: Vec<HostId>,
    pub infectious: Vec<HostId>,
    pub exposed: HostId,
}

#[derive(Debug, Clone)]
pub struct PartialData {
    population: Arc<HostPopulation>,
    events: Vec<PartialEvent>,
}

impl PartialData {
    pub fn new(population: Arc<HostPopulation>, events: Vec<PartialEvent>) -> Result<Self> {
        let n = population.len();
        let mut mark = vec![0u8; n];
        for (j, ev) in events.iter().enumerate() {
            mark.iter_mut().for_each(|m| *m = 0);
            for &x in &ev.susceptible {
                if x >= n || mark[x] != 0 {
                    return Err(Error::domain(format!("event {j}: bad susceptible host {x}")));
                }
                mark[x] = 1;
            }
            for &y in &ev.infectious {
                if y >= n || mark[y] != 0 {
                    return Err(Error::domain(format!("event {j}: bad infectious host {y}")));
                }
                mark[y] = 2;
            }
            if ev.exposed >= n || mark[ev.exposed] != 1 {
                return Err(Error::domain(format!(
                    "event {j}: exposed host {} is not in the susceptible set",
                    ev.exposed
                )));
            }
        }
        Ok(Self { population, events })
    }

    pub fn population(&self) -> &Arc<HostPopulation> {
        &self.population
    }

    pub fn events(&self) -> &[PartialEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Sets `S(t_j-)` and `I(t_j-)` at every exposure event of `traj`, in event order.
///
/// Simultaneous exposures are ordered by host id; an earlier one in that order is no
/// longer susceptible at a later one.
pub fn extract_partial_data(traj: &Trajectory) -> PartialData {
    let hosts = traj.hosts();
    let order = traj.exposure_order();
    let events = order
        .iter()
        .map(|&x| {
            let t = hosts[x].exposure.unwrap();
            let susceptible = (0..hosts.len())
                .filter(|&h| match hosts[h].exposure {
                    None => true,
                    Some(e) => e > t || (e == t && h >= x && !hosts[h].is_seed()),
                })
                .collect();
            let infectious = traj.infectious_before(t);
            PartialEvent {
                susceptible,
                infectious,
                exposed: x,
            }
        })
        .collect();
    PartialData {
        population: traj.population().clone(),
        events,
    }
}

/// Log of the partial likelihood, evaluated directly from the sets.
pub fn partial_loglik(kernel: &KernelSpec, alpha: f64, beta: f64, z: &PartialData) -> LogLik {
    let pop = &z.population;
    let mut total = CompensatedSum::new();
    let mut zero = 0;
    for ev in &z.events {
        let pressure = |x: HostId| -> f64 {
            ev.infectious
                .iter()
                .map(|&y| kernel.value(pop.distance(x, y)))
                .collect::<CompensatedSum>()
                .value()
        };
        let numerator = alpha + beta * pressure(ev.exposed);
        let mut pair_sum = CompensatedSum::new();
        for &x in &ev.susceptible {
            pair_sum.add(pressure(x));
        }
        let denominator = ev.susceptible.len() as f64 * alpha + beta * pair_sum.value();
        if numerator > 0.0 {
            total.add(numerator.ln() - denominator.ln());
        } else {
            zero += 1;
        }
    }
    LogLik {
        value: if zero > 0 { f64::NEG_INFINITY } else { total.value() },
        zero_rate_events: zero,
    }
}

#[derive(Debug, Clone, Copy)]
struct RangePair {
    d: f64,
    ln_d: f64,
    lo: u32,
    hi: u32,
}

/// Precomputed form of [`PartialData`] for repeated evaluation.
///
/// Every (susceptible, infectious) host pair is present at a run of consecutive
/// events, so the denominators are prefix sums of a difference array over event
/// indices. One evaluation costs one kernel value per pair run.
#[derive(Debug, Clone)]
pub struct PartialSummary {
    susceptible_counts: Vec<f64>,
    runs: Vec<RangePair>,
    numerator: Vec<(f64, f64)>,
    offsets: Vec<usize>,
}

fn membership_runs(flags: &[bool]) -> Vec<(u32, u32)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (j, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(j as u32),
            (false, Some(s)) => {
                runs.push((s, j as u32));
                start = None;
            }
            _ => {}
        }
    }
    runs
}

fn ln_or_neg_inf(d: f64) -> f64 {
    if d > 0.0 {
        d.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl PartialSummary {
    pub fn new(z: &PartialData) -> Self {
        let n = z.population.len();
        let m = z.events.len();
        let mut in_s = vec![vec![false; m]; n];
        let mut in_i = vec![vec![false; m]; n];
        for (j, ev) in z.events.iter().enumerate() {
            ev.susceptible.iter().for_each(|&x| in_s[x][j] = true);
            ev.infectious.iter().for_each(|&y| in_i[y][j] = true);
        }
        let s_runs: Vec<_> = in_s.iter().map(|f| membership_runs(f)).collect();
        let i_runs: Vec<_> = in_i.iter().map(|f| membership_runs(f)).collect();
        let mut runs = Vec::new();
        for x in 0..n {
            if s_runs[x].is_empty() {
                continue;
            }
            for y in 0..n {
                if i_runs[y].is_empty() || y == x {
                    continue;
                }
                let d = z.population.distance(x, y);
                for &(a0, a1) in &s_runs[x] {
                    for &(b0, b1) in &i_runs[y] {
                        let (lo, hi) = (a0.max(b0), a1.min(b1));
                        if lo < hi {
                            runs.push(RangePair {
                                d,
                                ln_d: ln_or_neg_inf(d),
                                lo,
                                hi,
                            });
                        }
                    }
                }
            }
        }
        // Sorting by start index keeps memory access local in the scatter step.
        runs.sort_by_key(|r| (r.lo, r.hi));
        let mut numerator = Vec::new();
        let mut offsets = vec![0];
        for ev in &z.events {
            for &y in &ev.infectious {
                let d = z.population.distance(ev.exposed, y);
                numerator.push((d, ln_or_neg_inf(d)));
            }
            offsets.push(numerator.len());
        }
        Self {
            susceptible_counts: z.events.iter().map(|e| e.susceptible.len() as f64).collect(),
            runs,
            numerator,
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.susceptible_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.susceptible_counts.is_empty()
    }

    /// Kernel-weighted (S, I) pair sums per event.
    pub fn pair_sums(&self, kernel: &KernelSpec) -> Vec<f64> {
        let m = self.len();
        let mut diff = vec![0.0; m + 1];
        for r in &self.runs {
            let k = kernel.value_with_ln(r.d, r.ln_d);
            diff[r.lo as usize] += k;
            diff[r.hi as usize] -= k;
        }
        let mut acc = CompensatedSum::new();
        diff[..m]
            .iter()
            .map(|&v| {
                acc.add(v);
                acc.value().max(0.0)
            })
            .collect()
    }

    pub fn loglik(&self, kernel: &KernelSpec, alpha: f64, beta: f64) -> LogLik {
        let pair_sums = self.pair_sums(kernel);
        let mut total = CompensatedSum::new();
        let mut zero = 0;
        for (j, w) in self.offsets.windows(2).enumerate() {
            let s: f64 = self.numerator[w[0]..w[1]]
                .iter()
                .map(|&(d, ln_d)| kernel.value_with_ln(d, ln_d))
                .sum();
            let numerator = alpha + beta * s;
            let denominator = self.susceptible_counts[j] * alpha + beta * pair_sums[j];
            if numerator > 0.0 {
                // the factor cannot exceed one; clamp rounding in the pair sums
                total.add((numerator.ln() - denominator.ln()).min(0.0));
            } else {
                zero += 1;
            }
        }
        LogLik {
            value: if zero > 0 { f64::NEG_INFINITY } else { total.value() },
            zero_rate_events: zero,
        }
    }
}
