//! The test matrix: every (dataset, fitted kernel, window) cell is fitted by MCMC
//! and put through each configured test. Cells run independently; a failure is
//! recorded in the cell and never aborts the matrix.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criticism::{ilr_test, llrt_pvalue_mean, LlrtOptions, MleOptions, TestKind, TestReport};
use crate::error::{Error, Result};
use crate::inference::{default_kappa, run_chains, AcceptanceStats, ChainSettings, ChainState, PriorSpec};
use crate::model::{KernelFamily, KernelSpec, Param};
use crate::numeric::compensated_sum;
use crate::rng::{label_stream, mix_seed};

use super::config::{ExperimentConfig, ParamSet};
use super::datasets::{window_tag, Dataset};
use super::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub dataset: ParamSet,
    pub fitted: KernelFamily,
    pub alternative: KernelFamily,
    pub window: f64,
    /// Fits the true family (the false-positive control).
    pub control: bool,
}

impl CellSpec {
    pub fn id(&self) -> String {
        let prefix = if self.control { "control_" } else { "" };
        format!(
            "{prefix}{}_{}_{}",
            self.dataset.tag(),
            self.fitted.tag(),
            window_tag(self.window)
        )
    }

    pub fn sub_seed(&self, seed: u64) -> u64 {
        mix_seed(seed, label_stream(&self.id()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub retained: usize,
    pub posterior_mean: BTreeMap<String, f64>,
    pub mean_occult: f64,
    pub acceptance: Vec<AcceptanceStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: String,
    pub spec: CellSpec,
    pub sub_seed: u64,
    pub t_cut: f64,
    pub realized_fraction: f64,
    pub observed_infections: usize,
    pub chain: Option<ChainSummary>,
    pub reports: Vec<TestReport>,
    pub errors: Vec<String>,
}

impl CellResult {
    pub fn e_hat(&self, test: TestKind) -> Option<f64> {
        self.reports.iter().find(|r| r.test == test).map(|r| r.e_hat_p)
    }
}

/// Cells in canonical order: matrix cells by dataset, fitted family and window,
/// then the control cells.
pub fn matrix_cells(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for &dataset in &cfg.datasets {
        for &fitted in &cfg.fitted_kernels {
            for &window in &cfg.windows {
                cells.push(CellSpec {
                    dataset,
                    fitted,
                    alternative: cfg.alt_kernel,
                    window,
                    control: false,
                });
            }
        }
    }
    if cfg.control {
        for &dataset in &cfg.control_datasets {
            for &window in &cfg.windows {
                cells.push(CellSpec {
                    dataset,
                    fitted: dataset.params().kernel.family,
                    alternative: cfg.control_alt_kernel,
                    window,
                    control: true,
                });
            }
        }
    }
    cells
}

fn chain_settings(cfg: &ExperimentConfig) -> ChainSettings {
    let burn_in = cfg.mcmc_burn_in.unwrap_or(cfg.mcmc_iterations / 5);
    let per_chain = cfg.test_samples.div_ceil(cfg.chains);
    ChainSettings {
        iterations: cfg.mcmc_iterations,
        burn_in: Some(burn_in),
        thin: Some(((cfg.mcmc_iterations - burn_in) / per_chain).max(1)),
        exposure_updates: cfg.mcmc_exposure_updates,
        ..ChainSettings::default()
    }
}

fn summarise_chain(samples: &[ChainState], settings: &ChainSettings, acceptance: Vec<AcceptanceStats>) -> ChainSummary {
    let n = samples.len().max(1) as f64;
    let posterior_mean = Param::ALL
        .iter()
        .map(|&p| {
            let mean = compensated_sum(samples.iter().map(|s| s.params.get(p))) / n;
            (p.name().to_string(), mean)
        })
        .collect();
    ChainSummary {
        iterations: settings.iterations,
        burn_in: settings.burn_in_len(),
        thin: settings.thin_len(),
        chains: acceptance.len(),
        retained: samples.len(),
        posterior_mean,
        mean_occult: samples.iter().map(|s| s.occult_count() as f64).sum::<f64>() / n,
        acceptance,
    }
}

/// Fit one cell and run its tests. Errors are captured in the result.
pub fn run_cell(cfg: &ExperimentConfig, dataset: &Dataset, spec: &CellSpec) -> CellResult {
    let sub_seed = spec.sub_seed(cfg.seed);
    let mut result = CellResult {
        id: spec.id(),
        spec: spec.clone(),
        sub_seed,
        t_cut: f64::NAN,
        realized_fraction: f64::NAN,
        observed_infections: 0,
        chain: None,
        reports: Vec::new(),
        errors: Vec::new(),
    };
    let Some(window) = dataset.window(spec.window) else {
        result.errors.push(format!("dataset {} has no {} window", dataset.set.tag(), spec.window));
        return result;
    };
    result.t_cut = window.t_cut;
    result.realized_fraction = window.realized_fraction;
    result.observed_infections = window.observed.infected_count();

    let y = &window.observed;
    let mean_nn = y.population().mean_nearest_neighbour();
    let settings = chain_settings(cfg);
    let kernel = match KernelSpec::new(spec.fitted, default_kappa(spec.fitted, mean_nn)) {
        Ok(k) => k,
        Err(e) => {
            result.errors.push(format!("fit: {e}"));
            return result;
        }
    };
    let chains = match run_chains(y, &PriorSpec::default(), &kernel, &settings, mix_seed(sub_seed, 0), cfg.chains) {
        Ok(c) => c,
        Err(e) => {
            result.errors.push(format!("fit: {e}"));
            return result;
        }
    };
    let per_chain = cfg.test_samples.div_ceil(cfg.chains);
    let mut samples = Vec::new();
    let mut acceptance = Vec::new();
    for c in chains {
        let skip = c.samples.len().saturating_sub(per_chain);
        samples.extend(c.samples.into_iter().skip(skip));
        acceptance.push(c.stats);
    }
    samples.truncate(cfg.test_samples);
    result.chain = Some(summarise_chain(&samples, &settings, acceptance));

    let mle = MleOptions {
        runs: cfg.mle_runs,
        ..MleOptions::default()
    };
    for &test in &cfg.tests {
        let seed = mix_seed(sub_seed, label_stream(test.tag()));
        let report = match test.objective() {
            None => ilr_test(&samples, cfg.ilr_ties, seed),
            Some(objective) => {
                let opts = LlrtOptions {
                    objective,
                    draws_per_sample: cfg.draws_per_sample,
                    mle,
                };
                llrt_pvalue_mean(&samples, spec.alternative, &opts, seed)
            }
        };
        match report {
            Ok(r) => result.reports.push(r.labelled(dataset.set.tag(), window.realized_fraction)),
            Err(e) => result.errors.push(format!("{}: {e}", test.tag())),
        }
    }
    result
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixIndex {
    pub cells: Vec<String>,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config: ExperimentConfig,
    pub placement_seed: u64,
    pub wall_clock_seconds: f64,
}

pub const CELL_DIR: &str = "cells";

fn run_cells(cfg: &ExperimentConfig, datasets: &[Dataset], out: Option<&Path>) -> Result<Vec<CellResult>> {
    let cells = matrix_cells(cfg);
    if let Some(dir) = out {
        fs::create_dir_all(dir.join(CELL_DIR))?;
    }
    cells
        .par_iter()
        .map(|spec| {
            let result = match datasets.iter().find(|d| d.set == spec.dataset) {
                Some(d) => run_cell(cfg, d, spec),
                None => {
                    return Err(Error::Config(format!("no dataset generated for {}", spec.dataset.tag())));
                }
            };
            if let Some(dir) = out {
                write_json(&dir.join(CELL_DIR).join(format!("{}.json", result.id)), &result)?;
            }
            Ok(result)
        })
        .collect()
}

/// Run every cell of the matrix on a pool of `cfg.threads` workers. With `out`,
/// each cell is written to `cells/<id>.json` as it finishes, then `index.json` and
/// `run.json` are written.
pub fn run_matrix(cfg: &ExperimentConfig, datasets: &[Dataset], out: Option<&Path>) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let start = Instant::now();
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_cells(cfg, datasets, out))?,
        None => run_cells(cfg, datasets, out)?,
    };
    if let Some(dir) = out {
        let index = MatrixIndex {
            cells: results.iter().map(|r| r.id.clone()).collect(),
            failed: results
                .iter()
                .filter(|r| !r.errors.is_empty())
                .map(|r| r.id.clone())
                .collect(),
        };
        write_json(&dir.join("index.json"), &index)?;
        let run = RunRecord {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            placement_seed: cfg.placement_seed(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        write_json(&dir.join("run.json"), &run)?;
    }
    Ok(results)
}
