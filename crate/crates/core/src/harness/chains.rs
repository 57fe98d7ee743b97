//! Chain output on disk.
//!
//! A chain directory holds `population.csv`, `manifest.json` and, per chain `c`:
//!
//! * `chain_<c>.csv`: one row per retained state with `sample`, `iteration`, the
//!   seven parameters, `log_posterior` and `occult`.
//! * `chain_<c>_states.csv`: the augmented trajectories, one row per (state, host)
//!   with `sample,host_id,exposure_time,infection_time,removal_time`.

use std::fs::{self, File};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{AcceptanceStats, ChainOutput, ChainSettings, ChainState};
use crate::model::{read_population, write_population, HostEvents, HostPopulation, KernelFamily, ModelParams, Trajectory};

use super::write_json;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFiles {
    pub seed: u64,
    pub summary: String,
    pub states: String,
    pub retained: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub acceptance: AcceptanceStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainManifest {
    pub kernel: KernelFamily,
    pub region_side: f64,
    pub t_max: f64,
    pub n_hosts: usize,
    pub settings: ChainSettings,
    pub chains: Vec<ChainFiles>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    sample: usize,
    iteration: usize,
    alpha: f64,
    beta: f64,
    kappa: f64,
    latent_mean: f64,
    latent_var: f64,
    infectious_mean: f64,
    infectious_var: f64,
    log_posterior: f64,
    occult: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateRow {
    sample: usize,
    host_id: usize,
    exposure_time: Option<f64>,
    infection_time: Option<f64>,
    removal_time: Option<f64>,
}

pub fn write_chains(dir: &Path, kernel: KernelFamily, settings: &ChainSettings, chains: &[ChainOutput]) -> Result<ChainManifest> {
    let first = chains
        .iter()
        .find_map(|c| c.samples.first())
        .ok_or_else(|| Error::domain("no retained samples to write"))?;
    let pop = first.aug.population().clone();
    fs::create_dir_all(dir)?;
    write_population(File::create(dir.join("population.csv"))?, &pop)?;
    let mut files = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        let summary = format!("chain_{c}.csv");
        let states = format!("chain_{c}_states.csv");
        let mut sw = csv::Writer::from_path(dir.join(&summary))?;
        let mut tw = csv::Writer::from_path(dir.join(&states))?;
        for (k, s) in chain.samples.iter().enumerate() {
            let [alpha, beta, kappa, latent_mean, latent_var, infectious_mean, infectious_var] = s.params.to_vec();
            sw.serialize(SummaryRow {
                sample: k,
                iteration: s.iteration,
                alpha,
                beta,
                kappa,
                latent_mean,
                latent_var,
                infectious_mean,
                infectious_var,
                log_posterior: s.log_posterior,
                occult: s.occult_count(),
            })?;
            for (h, ev) in s.aug.hosts().iter().enumerate() {
                tw.serialize(StateRow {
                    sample: k,
                    host_id: h,
                    exposure_time: ev.exposure,
                    infection_time: ev.infection,
                    removal_time: ev.removal,
                })?;
            }
        }
        sw.flush()?;
        tw.flush()?;
        files.push(ChainFiles {
            seed: chain.seed,
            summary,
            states,
            retained: chain.samples.len(),
            burn_in: chain.burn_in,
            thin: chain.thin,
            acceptance: chain.stats.clone(),
        });
    }
    let manifest = ChainManifest {
        kernel,
        region_side: pop.region_side(),
        t_max: first.aug.t_max(),
        n_hosts: pop.len(),
        settings: settings.clone(),
        chains: files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Retained states of every chain in `dir`, chain by chain.
pub fn read_chains(dir: &Path) -> Result<(ChainManifest, Vec<ChainState>)> {
    let manifest: ChainManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let pop = Arc::new(read_population(File::open(dir.join("population.csv"))?, manifest.region_side)?);
    let mut states = Vec::new();
    for files in &manifest.chains {
        states.extend(read_one(dir, files, &manifest, &pop)?);
    }
    Ok((manifest, states))
}

fn read_one(dir: &Path, files: &ChainFiles, manifest: &ChainManifest, pop: &Arc<HostPopulation>) -> Result<Vec<ChainState>> {
    let rows: Vec<SummaryRow> = csv::Reader::from_path(dir.join(&files.summary))?
        .deserialize()
        .collect::<Result<_, _>>()?;
    let n = pop.len();
    let mut hosts = vec![Vec::with_capacity(n); rows.len()];
    for row in csv::Reader::from_path(dir.join(&files.states))?.deserialize() {
        let row: StateRow = row?;
        let slot = hosts
            .get_mut(row.sample)
            .ok_or_else(|| Error::InvalidTrajectory(format!("state row for unknown sample {}", row.sample)))?;
        if row.host_id != slot.len() {
            return Err(Error::InvalidTrajectory(format!(
                "sample {}: host rows out of order at host {}",
                row.sample, row.host_id
            )));
        }
        slot.push(HostEvents {
            exposure: row.exposure_time,
            infection: row.infection_time,
            removal: row.removal_time,
        });
    }
    rows.into_iter()
        .zip(hosts)
        .map(|(r, hosts)| {
            let params = ModelParams::from_vec(
                manifest.kernel,
                [r.alpha, r.beta, r.kappa, r.latent_mean, r.latent_var, r.infectious_mean, r.infectious_var],
            );
            params.validate()?;
            Ok(ChainState {
                params,
                aug: Trajectory::new(pop.clone(), hosts, manifest.t_max)?,
                log_posterior: r.log_posterior,
                iteration: r.iteration,
            })
        })
        .collect()
}
