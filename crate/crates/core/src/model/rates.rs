//! Exposure-rate arithmetic: `alpha + beta * sum_{y in I} K(d(x, y))`.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

use super::params::ModelParams;
use super::population::{HostId, HostPopulation};

/// Infectious pressure on `target`: sum of kernel weights to the infectious hosts.
#[inline]
pub fn kernel_sum(params: &ModelParams, pop: &HostPopulation, target: HostId, infectious: &[HostId]) -> f64 {
    let mut s = CompensatedSum::new();
    for &y in infectious {
        s.add(params.kernel.value(pop.distance(target, y)));
    }
    s.value()
}

/// Rate at which a susceptible `target` becomes exposed.
pub fn exposure_rate(
    params: &ModelParams,
    pop: &HostPopulation,
    target: HostId,
    infectious: &[HostId],
) -> Result<f64> {
    check_ids(pop, std::iter::once(target).chain(infectious.iter().copied()))?;
    if infectious.contains(&target) {
        return Err(Error::domain(format!("host {target} is itself infectious")));
    }
    Ok(params.alpha + params.beta * kernel_sum(params, pop, target, infectious))
}

/// Total exposure pressure on the susceptible set: `|S| alpha + beta * sum_{x in S, y in I} K`.
pub fn total_pressure(
    params: &ModelParams,
    pop: &HostPopulation,
    susceptibles: &[HostId],
    infectious: &[HostId],
) -> Result<f64> {
    check_ids(pop, susceptibles.iter().chain(infectious).copied())?;
    if let Some(x) = susceptibles.iter().find(|x| infectious.contains(x)) {
        return Err(Error::domain(format!("host {x} is both susceptible and infectious")));
    }
    let mut pair_sum = CompensatedSum::new();
    for &x in susceptibles {
        pair_sum.add(kernel_sum(params, pop, x, infectious));
    }
    Ok(susceptibles.len() as f64 * params.alpha + params.beta * pair_sum.value())
}

fn check_ids(pop: &HostPopulation, ids: impl Iterator<Item = HostId>) -> Result<()> {
    for h in ids {
        if h >= pop.len() {
            return Err(Error::domain(format!("host id {h} out of range 0..{}", pop.len())));
        }
    }
    Ok(())
}
