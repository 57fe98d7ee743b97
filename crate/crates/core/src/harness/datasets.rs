use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    write_event_log, write_observed, write_population, HostPopulation, ModelParams, ObservedData, Trajectory,
};
use crate::rng::{child_rng, label_stream, mix_seed};
use crate::simulator::{simulate, SimulationOptions};

use super::config::{ExperimentConfig, ParamSet};
use super::write_json;

/// One observation window of a dataset.
#[derive(Debug, Clone)]
pub struct Window {
    pub fraction: f64,
    pub t_cut: f64,
    /// Infected fraction actually observed at `t_cut`.
    pub realized_fraction: f64,
    pub observed: ObservedData,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub set: ParamSet,
    pub params: ModelParams,
    /// Seed of the successful simulation.
    pub seed: u64,
    /// Extinctions before that simulation.
    pub retries: usize,
    pub trajectory: Trajectory,
    pub windows: Vec<Window>,
}

impl Dataset {
    pub fn window(&self, fraction: f64) -> Option<&Window> {
        self.windows.iter().find(|w| w.fraction == fraction)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowRecord {
    fraction: f64,
    t_cut: f64,
    realized_fraction: f64,
    observed_infections: usize,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRecord {
    dataset: ParamSet,
    params: ModelParams,
    seed: u64,
    retries: usize,
    final_size: usize,
    t_max: f64,
    windows: Vec<WindowRecord>,
}

pub fn population(cfg: &ExperimentConfig) -> Result<Arc<HostPopulation>> {
    let mut rng = child_rng(cfg.placement_seed(), 0);
    Ok(Arc::new(HostPopulation::uniform(cfg.n_hosts, cfg.region_side, &mut rng)?))
}

/// File-name stem for a window fraction: `100`, `70`, `40`, ...
pub fn window_tag(fraction: f64) -> String {
    let pct = fraction * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

/// Simulate one epidemic to full infection; an extinction (a host never infected)
/// triggers a reseed, up to `retry_cap` times.
pub fn simulate_dataset(
    cfg: &ExperimentConfig,
    pop: &Arc<HostPopulation>,
    set: ParamSet,
    windows: &[f64],
) -> Result<Dataset> {
    let params = set.params();
    let base = mix_seed(cfg.seed, label_stream(set.tag()));
    let mut last = (0.0, 0);
    for attempt in 0..=cfg.retry_cap {
        let seed = mix_seed(base, attempt as u64);
        let traj = simulate(&params, pop, &SimulationOptions::full_infection(), &mut child_rng(seed, 0))?;
        let infected = traj.infected_count();
        if infected < pop.len() {
            eprintln!(
                "dataset {}: attempt {attempt} infected {infected} of {} hosts, reseeding",
                set.tag(),
                pop.len()
            );
            last = (traj.t_max(), infected);
            continue;
        }
        let windows = windows
            .iter()
            .map(|&fraction| {
                let (observed, t_cut) = traj.truncate(fraction)?;
                Ok(Window {
                    fraction,
                    t_cut,
                    realized_fraction: observed.infected_count() as f64 / pop.len() as f64,
                    observed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(Dataset {
            set,
            params,
            seed,
            retries: attempt,
            trajectory: traj,
            windows,
        });
    }
    Err(Error::Extinction {
        time: last.0,
        infected: last.1,
        population: pop.len(),
    })
}

/// One dataset per parameter set in the matrix (and in the control list).
pub fn generate_datasets(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    let pop = population(cfg)?;
    let mut sets: Vec<ParamSet> = cfg.datasets.clone();
    if cfg.control {
        sets.extend(cfg.control_datasets.iter().copied());
    }
    sets.sort();
    sets.dedup();
    sets.into_iter()
        .map(|set| simulate_dataset(cfg, &pop, set, &cfg.windows))
        .collect()
}

/// Writes `population.csv` and, per dataset, `<tag>/events.csv`,
/// `<tag>/window_<pct>.csv` and `<tag>/dataset.json`.
pub fn write_datasets(datasets: &[Dataset], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(d) = datasets.first() {
        write_population(fs::File::create(dir.join("population.csv"))?, d.trajectory.population())?;
    }
    for d in datasets {
        let sub = dir.join(d.set.tag());
        fs::create_dir_all(&sub)?;
        write_event_log(fs::File::create(sub.join("events.csv"))?, &d.trajectory)?;
        let mut windows = Vec::new();
        for w in &d.windows {
            let file = format!("window_{}.csv", window_tag(w.fraction));
            write_observed(fs::File::create(sub.join(&file))?, &w.observed)?;
            windows.push(WindowRecord {
                fraction: w.fraction,
                t_cut: w.t_cut,
                realized_fraction: w.realized_fraction,
                observed_infections: w.observed.infected_count(),
                file,
            });
        }
        let record = DatasetRecord {
            dataset: d.set,
            params: d.params,
            seed: d.seed,
            retries: d.retries,
            final_size: d.trajectory.infected_count(),
            t_max: d.trajectory.t_max(),
            windows,
        };
        write_json(&sub.join("dataset.json"), &record)?;
    }
    Ok(())
}
