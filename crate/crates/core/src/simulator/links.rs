//! Ordered infection links.
//!
//! At an exposure event every susceptible `x` carries one link per infectious host
//! `y` with weight `beta * K(d(x, y))`, plus one background pseudo-link with weight
//! `alpha`. Links are ordered by ascending weight (ties by exposed host, then source,
//! background first) and the cumulative weights, normalised by their total, partition
//! `[0, 1]`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HostId, HostPopulation, ModelParams};
use crate::numeric::CompensatedSum;

/// Who caused an exposure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    /// Background (primary) infection.
    Primary,
    Host(HostId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub exposed: HostId,
    pub source: Source,
    pub weight: f64,
}

impl Link {
    fn key_cmp(&self, other: &Link) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.exposed.cmp(&other.exposed))
            .then(self.source.cmp(&other.source))
    }
}

#[inline]
pub fn link_weight(params: &ModelParams, pop: &HostPopulation, exposed: HostId, source: Source) -> f64 {
    match source {
        Source::Primary => params.alpha,
        Source::Host(y) => params.beta * params.kernel.value(pop.distance(exposed, y)),
    }
}

fn all_links<'a>(
    params: &'a ModelParams,
    pop: &'a HostPopulation,
    susceptible: &'a [HostId],
    infectious: &'a [HostId],
) -> impl Iterator<Item = Link> + 'a {
    susceptible.iter().flat_map(move |&x| {
        std::iter::once(Source::Primary)
            .chain(infectious.iter().map(|&y| Source::Host(y)))
            .map(move |source| Link {
                exposed: x,
                source,
                weight: link_weight(params, pop, x, source),
            })
    })
}

/// Every link at an event, in ascending order.
pub fn ordered_links(
    params: &ModelParams,
    pop: &HostPopulation,
    susceptible: &[HostId],
    infectious: &[HostId],
) -> Vec<Link> {
    let mut links: Vec<Link> = all_links(params, pop, susceptible, infectious).collect();
    links.sort_by(Link::key_cmp);
    links
}

/// First link whose cumulative weight exceeds `u * W`.
pub fn select_link(
    params: &ModelParams,
    pop: &HostPopulation,
    susceptible: &[HostId],
    infectious: &[HostId],
    u: f64,
) -> Result<Link> {
    let links = ordered_links(params, pop, susceptible, infectious);
    let total: f64 = links.iter().map(|l| l.weight).collect::<CompensatedSum>().value();
    if !(total > 0.0) {
        return Err(Error::ImpossibleState(
            "no link carries positive weight at an exposure event".into(),
        ));
    }
    let target = u * total;
    let mut cum = CompensatedSum::new();
    for l in &links {
        cum.add(l.weight);
        if l.weight > 0.0 && cum.value() > target {
            return Ok(*l);
        }
    }
    // u within rounding of 1: take the heaviest link
    Ok(*links.iter().rev().find(|l| l.weight > 0.0).unwrap())
}

/// Sub-interval of `[0, 1]` owned by the link `source -> exposed`.
pub fn link_interval(
    params: &ModelParams,
    pop: &HostPopulation,
    susceptible: &[HostId],
    infectious: &[HostId],
    exposed: HostId,
    source: Source,
) -> Result<(f64, f64)> {
    if !susceptible.contains(&exposed) {
        return Err(Error::domain(format!("host {exposed} is not susceptible at this event")));
    }
    if let Source::Host(y) = source {
        if !infectious.contains(&y) {
            return Err(Error::domain(format!("source host {y} is not infectious at this event")));
        }
    }
    let target = Link {
        exposed,
        source,
        weight: link_weight(params, pop, exposed, source),
    };
    let mut below = CompensatedSum::new();
    let mut total = CompensatedSum::new();
    for l in all_links(params, pop, susceptible, infectious) {
        total.add(l.weight);
        if l.key_cmp(&target) == Ordering::Less {
            below.add(l.weight);
        }
    }
    let w = total.value();
    if !(w > 0.0) {
        return Err(Error::ImpossibleState("total link weight is zero".into()));
    }
    let lo = below.value() / w;
    let hi = (below.value() + target.weight) / w;
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

/// Sub-interval of `[0, 1]` owned by every link whose weight equals that of
/// `source -> exposed`. Placing a tied link uniformly at random among its ties and
/// then drawing uniformly inside it is the same as drawing uniformly over this block.
pub fn tied_link_interval(
    params: &ModelParams,
    pop: &HostPopulation,
    susceptible: &[HostId],
    infectious: &[HostId],
    exposed: HostId,
    source: Source,
) -> Result<(f64, f64)> {
    let (lo, hi) = link_interval(params, pop, susceptible, infectious, exposed, source)?;
    let weight = link_weight(params, pop, exposed, source);
    let mut below = CompensatedSum::new();
    let mut tied = CompensatedSum::new();
    let mut total = CompensatedSum::new();
    for l in all_links(params, pop, susceptible, infectious) {
        total.add(l.weight);
        if l.weight < weight {
            below.add(l.weight);
        } else if l.weight == weight {
            tied.add(l.weight);
        }
    }
    let w = total.value();
    let block_lo = (below.value() / w).clamp(0.0, 1.0);
    let block_hi = ((below.value() + tied.value()) / w).clamp(0.0, 1.0);
    // rounding must not move the block off the link's own interval
    Ok((block_lo.min(lo), block_hi.max(hi)))
}
