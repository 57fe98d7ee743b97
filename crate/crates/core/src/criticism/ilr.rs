use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ChainState, SourcedExposure};
use crate::likelihood::extract_partial_data;
use crate::simulator::{link_interval, tied_link_interval};

/// How links of equal weight are ordered when locating a residual.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Fixed order (exposed host, then source), as in the link-selection map.
    Ordered,
    /// Uniformly random order at each event; the residual is uniform over the block
    /// of tied links. Every background pseudo-link carries the same weight, so this
    /// matters whenever background infection is possible.
    #[default]
    Randomized,
}

/// One residual per exposure event with at least one infectious host: a uniform
/// draw inside the cumulative-weight interval that the imputed link occupies among
/// all links at that event. With nobody infectious no infectious-susceptible link
/// exists and the event has no residual.
///
/// `sources` must come from [`crate::inference::impute_sources`] on the same state.
pub fn ilr_residuals<R: Rng + ?Sized>(
    state: &ChainState,
    sources: &[SourcedExposure],
    ties: TieRule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let z = extract_partial_data(&state.aug);
    if z.len() != sources.len() {
        return Err(Error::domain(format!(
            "{} sources for {} exposure events",
            sources.len(),
            z.len()
        )));
    }
    let pop = state.aug.population();
    z.events()
        .iter()
        .zip(sources)
        .filter(|(ev, _)| !ev.infectious.is_empty())
        .map(|(ev, src)| {
            if ev.exposed != src.exposed {
                return Err(Error::domain(format!(
                    "source for event {} names host {}, expected {}",
                    src.event, src.exposed, ev.exposed
                )));
            }
            let interval = match ties {
                TieRule::Ordered => link_interval,
                TieRule::Randomized => tied_link_interval,
            };
            let (lo, hi) = interval(
                &state.params,
                pop,
                &ev.susceptible,
                &ev.infectious,
                ev.exposed,
                src.source,
            )?;
            Ok(lo + (hi - lo) * rng.random::<f64>())
        })
        .collect()
}
