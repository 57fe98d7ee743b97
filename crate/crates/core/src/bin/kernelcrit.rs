use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kernelcrit::criticism::{ilr_test, llrt_pvalue_mean, LlrtOptions, MleOptions, TestKind};
use kernelcrit::harness::{
    estimate_latent_power, population, read_chains, report, run_experiment, window_tag, write_chains, write_json,
    ExperimentConfig,
};
use kernelcrit::inference::{default_kappa, run_chains, ChainSettings, PriorSpec};
use kernelcrit::model::{read_observed, write_event_log, KernelFamily, KernelSpec};
use kernelcrit::rng::{child_rng, mix_seed};
use kernelcrit::simulator::{simulate, SimulationOptions};
use kernelcrit::{Error, Result};

/// Spatial SEIR simulation, kernel fitting and latent model criticism.
#[derive(Parser, Debug)]
#[command(name = "kernelcrit", version)]
struct Cli {
    /// Key-value config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or file for `test`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate epidemics over one host placement.
    Simulate(SimulateArgs),
    /// Fit a kernel family to observations by MCMC.
    Fit(FitArgs),
    /// Run a latent test on stored chains.
    Test(TestArgs),
    /// Generate datasets, run the full test matrix and render the report.
    Matrix,
    /// Latent versus complete-data power on the toy configuration.
    Power(PowerArgs),
    /// Rebuild tables, bar charts and the manifest from a results directory.
    Report,
    /// Print the effective configuration as a config file.
    Config,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Censor each epidemic when this fraction of hosts has become infectious.
    #[arg(long)]
    stop_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Observation CSV (`host_id,x,y,...,infection_time,removal_time`).
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, default_value = "exp")]
    kernel: KernelFamily,
    /// Observation horizon; defaults to the latest event in the file.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    chains: PathBuf,
    #[arg(long, value_parser = TestKind::from_cli)]
    test: TestKind,
    #[arg(long, default_value = "exp")]
    alt_kernel: KernelFamily,
    /// Reference trajectories per retained state (likelihood ratio tests).
    #[arg(long)]
    draws_per_sample: Option<usize>,
    /// Use only the last N retained states of each chain.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long)]
    alpha_level: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn simulate_cmd(cfg: &ExperimentConfig, args: &SimulateArgs, out: &Path) -> Result<serde_json::Value> {
    let params = cfg.param_set.params();
    let pop = population(cfg)?;
    let mut replicates = Vec::new();
    for r in 0..args.replicates {
        let seed = mix_seed(cfg.seed, r as u64);
        let traj = simulate(&params, &pop, &SimulationOptions::full_infection(), &mut child_rng(seed, 0))?;
        let t_cuts: serde_json::Map<String, serde_json::Value> = [1.0, 0.7, 0.4]
            .iter()
            .map(|&f| (window_tag(f), traj.window_end(f).map_or(serde_json::Value::Null, |t| json!(t))))
            .collect();
        let written = match args.stop_fraction {
            Some(f) => traj.censor(traj.window_end(f)?)?,
            None => traj.clone(),
        };
        let file = format!("replicate_{r}.csv");
        write_event_log(File::create(out.join(&file))?, &written)?;
        replicates.push(json!({
            "file": file,
            "seed": seed,
            "final_size": traj.infected_count(),
            "t_max": written.t_max(),
            "t_cut": t_cuts,
        }));
    }
    let manifest = json!({
        "param_set": cfg.param_set,
        "params": params,
        "n_hosts": cfg.n_hosts,
        "region_side": cfg.region_side,
        "seed": cfg.seed,
        "placement_seed": cfg.placement_seed(),
        "stop_fraction": args.stop_fraction,
        "replicates": replicates,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(json!({ "replicates": args.replicates, "out": out }))
}

fn fit_cmd(cfg: &ExperimentConfig, args: &FitArgs, out: &Path) -> Result<serde_json::Value> {
    let y = read_observed(File::open(&args.obs)?, cfg.region_side, args.t_max)?;
    let settings = ChainSettings {
        iterations: args.iters.unwrap_or(cfg.mcmc_iterations),
        burn_in: args.burnin.or(cfg.mcmc_burn_in),
        thin: args.thin,
        exposure_updates: cfg.mcmc_exposure_updates,
        ..ChainSettings::default()
    };
    let kernel = KernelSpec::new(args.kernel, default_kappa(args.kernel, y.population().mean_nearest_neighbour()))?;
    let chains = run_chains(&y, &PriorSpec::default(), &kernel, &settings, cfg.seed, args.chains.unwrap_or(cfg.chains))?;
    let manifest = write_chains(out, args.kernel, &settings, &chains)?;
    Ok(json!({ "chains": manifest.chains.len(), "retained": manifest.chains.iter().map(|c| c.retained).sum::<usize>(), "out": out }))
}

fn test_cmd(cfg: &ExperimentConfig, args: &TestArgs, out: &Path) -> Result<serde_json::Value> {
    let (manifest, states) = read_chains(&args.chains)?;
    let states = match args.samples {
        None => states,
        Some(n) => {
            let mut kept = Vec::new();
            let mut offset = 0;
            for c in &manifest.chains {
                let chain = &states[offset..offset + c.retained];
                kept.extend_from_slice(&chain[chain.len().saturating_sub(n)..]);
                offset += c.retained;
            }
            kept
        }
    };
    let report = match args.test.objective() {
        None => ilr_test(&states, cfg.ilr_ties, cfg.seed)?,
        Some(objective) => {
            let opts = LlrtOptions {
                objective,
                draws_per_sample: args.draws_per_sample.unwrap_or(cfg.draws_per_sample),
                mle: MleOptions {
                    runs: cfg.mle_runs,
                    ..MleOptions::default()
                },
            };
            llrt_pvalue_mean(&states, args.alt_kernel, &opts, cfg.seed)?
        }
    };
    let n = manifest.n_hosts as f64;
    let observed = states
        .first()
        .map_or(0.0, |s| s.aug.hosts().iter().filter(|h| h.infection.is_some()).count() as f64 / n);
    let report = report.labelled(args.chains.display().to_string(), observed);
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_json(out, &report)?;
    Ok(json!({ "test": args.test, "e_hat_p": report.e_hat_p, "n_samples": report.n_samples, "dropped": report.dropped, "out": out }))
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = load_config(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(args) => simulate_cmd(&cfg, args, &out_dir(cli, "simulations")?),
        Command::Fit(args) => fit_cmd(&cfg, args, &out_dir(cli, "chains")?),
        Command::Test(args) => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report.json"));
            test_cmd(&cfg, args, &out)
        }
        Command::Matrix => {
            let out = out_dir(cli, "results")?;
            let (cells, files) = run_experiment(&cfg, &out)?;
            let failed: Vec<&str> = cells.iter().filter(|c| !c.errors.is_empty()).map(|c| c.id.as_str()).collect();
            Ok(json!({ "cells": cells.len(), "failed": failed, "table2": files.table2, "table3": files.table3 }))
        }
        Command::Power(args) => {
            let out = out_dir(cli, "power")?;
            let alpha = args.alpha_level.unwrap_or(cfg.power.alpha_level);
            let reps = args.replicates.unwrap_or(cfg.power.replicates);
            let (latent, complete) = estimate_latent_power(&cfg.power, alpha, reps, cfg.seed)?;
            let result = json!({ "config": cfg.power, "seed": cfg.seed, "latent": latent, "complete": complete });
            write_json(&out.join("power.json"), &result)?;
            Ok(result)
        }
        Command::Report => {
            let files = report(&out_dir(cli, "results")?)?;
            Ok(json!({ "table2": files.table2, "table3": files.table3, "barcharts": files.barcharts }))
        }
        Command::Config => {
            print!("{}", cfg.to_text());
            Ok(serde_json::Value::Null)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
