//! Experiment orchestration: configuration, dataset generation, the test matrix,
//! the latent power experiment and report rendering.
//!
//! A results directory holds `datasets/`, one `cells/<id>.json` per matrix cell,
//! `index.json` and `run.json` from the matrix run, and the rendered report.

mod chains;
mod config;
mod datasets;
mod matrix;
mod power;
mod report;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub use chains::{read_chains, write_chains, ChainFiles, ChainManifest};
pub use config::{ExperimentConfig, ParamSet};
pub use datasets::{generate_datasets, population, simulate_dataset, window_tag, write_datasets, Dataset, Window};
pub use matrix::{matrix_cells, run_cell, run_matrix, CellResult, CellSpec, ChainSummary, MatrixIndex, RunRecord};
pub use power::{estimate_latent_power, rejection_rates, PowerConfig, PowerEstimate, PowerMode, MAX_TOY_HOSTS};
pub use report::{barchart_svg, load_cells, report, ReportFiles, TABLE_HEADER};

/// Pretty JSON written to a temporary sibling and renamed into place.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Generate datasets under `out/datasets`, run the matrix and render the report.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<CellResult>, ReportFiles)> {
    let datasets = generate_datasets(cfg)?;
    write_datasets(&datasets, &out.join("datasets"))?;
    let cells = run_matrix(cfg, &datasets, Some(out))?;
    let files = report(out)?;
    Ok((cells, files))
}

#[cfg(test)]
mod tests;
