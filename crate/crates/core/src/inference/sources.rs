use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HostId, ModelParams, Trajectory};
use crate::simulator::{link_weight, Source};

/// Imputed cause of the `event`-th exposure (in exposure order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcedExposure {
    pub event: usize,
    pub exposed: HostId,
    pub time: f64,
    pub source: Source,
}

/// Draw the source of every exposure event of `traj` from its categorical
/// distribution: background with weight `alpha`, infectious host `y` with weight
/// `beta * K(d(y, x))`.
pub fn impute_sources<R: Rng + ?Sized>(
    params: &ModelParams,
    traj: &Trajectory,
    rng: &mut R,
) -> Result<Vec<SourcedExposure>> {
    let pop = traj.population();
    let mut weights = Vec::new();
    let mut out = Vec::new();
    for (event, x) in traj.exposure_order().into_iter().enumerate() {
        let t = traj.host(x).exposure.unwrap();
        let candidates: Vec<Source> = std::iter::once(Source::Primary)
            .chain(traj.infectious_before(t).into_iter().map(Source::Host))
            .collect();
        weights.clear();
        weights.extend(candidates.iter().map(|&s| link_weight(params, pop, x, s)));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ImpossibleState(format!(
                "exposure of host {x} at {t} has no possible source"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (k, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            chosen = Some(candidates[k]);
            if acc > target {
                break;
            }
        }
        out.push(SourcedExposure {
            event,
            exposed: x,
            time: t,
            source: chosen.unwrap(),
        });
    }
    Ok(out)
}
