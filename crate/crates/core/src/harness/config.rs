//! Experiment configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment and
//! blank lines are ignored. Lists are comma-separated. Every key is optional and
//! [`ExperimentConfig::set`] applies the same parsing to `--set key=value`
//! overrides. [`ExperimentConfig::to_text`] writes a complete file with the
//! defaults.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criticism::{TestKind, TieRule};
use crate::error::{Error, Result};
use crate::model::{KernelFamily, KernelSpec, ModelParams, Sojourn};

use super::power::PowerConfig;

/// Parameter sets used to generate the simulated datasets. All use the
/// exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSet {
    Original,
    AlphaX2,
    BetaX2,
    KappaX2,
}

impl ParamSet {
    pub const ALL: [ParamSet; 4] = [
        ParamSet::Original,
        ParamSet::AlphaX2,
        ParamSet::BetaX2,
        ParamSet::KappaX2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ParamSet::Original => "original",
            ParamSet::AlphaX2 => "alpha_x2",
            ParamSet::BetaX2 => "beta_x2",
            ParamSet::KappaX2 => "kappa_x2",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ParamSet::Original => "Original",
            ParamSet::AlphaX2 => "alpha x2",
            ParamSet::BetaX2 => "beta x2",
            ParamSet::KappaX2 => "kappa x2",
        }
    }

    pub fn params(self) -> ModelParams {
        let base = ModelParams::original();
        match self {
            ParamSet::Original => base,
            ParamSet::AlphaX2 => ModelParams { alpha: 0.002, ..base },
            ParamSet::BetaX2 => ModelParams { beta: 6.0, ..base },
            ParamSet::KappaX2 => ModelParams {
                kernel: KernelSpec {
                    family: KernelFamily::Exponential,
                    kappa: 0.06,
                },
                ..base
            },
        }
    }

    pub fn from_tag(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        ParamSet::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter set '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_hosts: usize,
    pub region_side: f64,
    /// Parameter set for single simulations.
    pub param_set: ParamSet,
    /// Parameter sets in the test matrix.
    pub datasets: Vec<ParamSet>,
    pub fitted_kernels: Vec<KernelFamily>,
    /// Alternative family for the latent likelihood ratio tests.
    pub alt_kernel: KernelFamily,
    pub windows: Vec<f64>,
    /// Also fit the true (exponential) family to every dataset.
    pub control: bool,
    pub control_datasets: Vec<ParamSet>,
    pub control_alt_kernel: KernelFamily,
    pub tests: Vec<TestKind>,
    pub seed: u64,
    /// Seed for host placement; derived from `seed` when absent.
    pub placement_seed: Option<u64>,
    pub retry_cap: usize,
    pub mcmc_iterations: usize,
    pub mcmc_burn_in: Option<usize>,
    pub mcmc_exposure_updates: Option<usize>,
    pub chains: usize,
    /// Retained posterior states passed to each test.
    pub test_samples: usize,
    pub draws_per_sample: usize,
    pub mle_runs: usize,
    pub ilr_ties: TieRule,
    pub threads: Option<usize>,
    pub svg: bool,
    pub power: PowerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_hosts: 150,
            region_side: 2000.0,
            param_set: ParamSet::Original,
            datasets: ParamSet::ALL.to_vec(),
            fitted_kernels: vec![KernelFamily::PowerLaw, KernelFamily::Gaussian],
            alt_kernel: KernelFamily::Exponential,
            windows: vec![1.0, 0.7, 0.4],
            control: true,
            control_datasets: vec![ParamSet::Original],
            control_alt_kernel: KernelFamily::Gaussian,
            tests: TestKind::ALL.to_vec(),
            seed: 20_190_101,
            placement_seed: None,
            retry_cap: 20,
            mcmc_iterations: 20_000,
            mcmc_burn_in: None,
            mcmc_exposure_updates: None,
            chains: 1,
            test_samples: 100,
            draws_per_sample: 1,
            mle_runs: 5,
            ilr_ties: TieRule::Randomized,
            threads: None,
            svg: true,
            power: PowerConfig::default(),
        }
    }
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_optional<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    match v.trim() {
        "" | "none" | "auto" => Ok(None),
        s => parse(key, s).map(Some),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_list<T>(v: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect()
}

fn parse_ties(key: &str, v: &str) -> Result<TieRule> {
    match v.trim() {
        "ordered" => Ok(TieRule::Ordered),
        "randomized" => Ok(TieRule::Randomized),
        _ => Err(Error::Config(format!("{key}: expected ordered or randomized, got '{v}'"))),
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n_hosts" => self.n_hosts = parse(key, v)?,
            "region_side" => self.region_side = parse(key, v)?,
            "param_set" => self.param_set = ParamSet::from_tag(v)?,
            "datasets" => self.datasets = parse_list(v, ParamSet::from_tag)?,
            "fitted_kernels" => self.fitted_kernels = parse_list(v, str::parse)?,
            "alt_kernel" => self.alt_kernel = v.parse()?,
            "windows" => self.windows = parse_list(v, |s| parse(key, s))?,
            "control" => self.control = parse_bool(key, v)?,
            "control.datasets" => self.control_datasets = parse_list(v, ParamSet::from_tag)?,
            "control.alt_kernel" => self.control_alt_kernel = v.parse()?,
            "tests" => self.tests = parse_list(v, TestKind::from_cli)?,
            "seed" => self.seed = parse(key, v)?,
            "placement_seed" => self.placement_seed = parse_optional(key, v)?,
            "retry_cap" => self.retry_cap = parse(key, v)?,
            "mcmc.iterations" => self.mcmc_iterations = parse(key, v)?,
            "mcmc.burn_in" => self.mcmc_burn_in = parse_optional(key, v)?,
            "mcmc.exposure_updates" => self.mcmc_exposure_updates = parse_optional(key, v)?,
            "mcmc.chains" => self.chains = parse(key, v)?,
            "test.samples" => self.test_samples = parse(key, v)?,
            "test.draws_per_sample" => self.draws_per_sample = parse(key, v)?,
            "test.mle_runs" => self.mle_runs = parse(key, v)?,
            "test.ilr_ties" => self.ilr_ties = parse_ties(key, v)?,
            "threads" => self.threads = parse_optional(key, v)?,
            "report.svg" => self.svg = parse_bool(key, v)?,
            k if k.starts_with("power.") => self.power.set(&k["power.".len()..], v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Apply `key=value` overrides in order, then validate.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{}' is not key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_hosts == 0 {
            return bad("n_hosts must be positive".into());
        }
        if !(self.region_side.is_finite() && self.region_side > 0.0) {
            return bad(format!("region_side {} must be positive", self.region_side));
        }
        if let Some(w) = self.windows.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return bad(format!("window fraction {w} outside (0, 1]"));
        }
        if self.mcmc_iterations == 0 || self.test_samples == 0 || self.chains == 0 {
            return bad("mcmc.iterations, mcmc.chains and test.samples must be positive".into());
        }
        if self.mcmc_burn_in.is_some_and(|b| b >= self.mcmc_iterations) {
            return bad("mcmc.burn_in must be below mcmc.iterations".into());
        }
        if self.draws_per_sample == 0 || self.mle_runs == 0 {
            return bad("test.draws_per_sample and test.mle_runs must be positive".into());
        }
        self.power.validate()
    }

    pub fn placement_seed(&self) -> u64 {
        self.placement_seed
            .unwrap_or_else(|| crate::rng::mix_seed(self.seed, crate::rng::label_stream("placement")))
    }

    /// Complete config file with every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("n_hosts", self.n_hosts.to_string());
        kv("region_side", self.region_side.to_string());
        kv("param_set", self.param_set.tag().into());
        kv("datasets", join(&self.datasets, |d| d.tag().into()));
        kv("fitted_kernels", join(&self.fitted_kernels, |k| k.tag().into()));
        kv("alt_kernel", self.alt_kernel.tag().into());
        kv("windows", join(&self.windows, f64::to_string));
        kv("control", self.control.to_string());
        kv("control.datasets", join(&self.control_datasets, |d| d.tag().into()));
        kv("control.alt_kernel", self.control_alt_kernel.tag().into());
        kv("tests", join(&self.tests, |t| t.cli_name().into()));
        kv("seed", self.seed.to_string());
        kv("placement_seed", optional(&self.placement_seed));
        kv("retry_cap", self.retry_cap.to_string());
        kv("mcmc.iterations", self.mcmc_iterations.to_string());
        kv("mcmc.burn_in", optional(&self.mcmc_burn_in));
        kv("mcmc.exposure_updates", optional(&self.mcmc_exposure_updates));
        kv("mcmc.chains", self.chains.to_string());
        kv("test.samples", self.test_samples.to_string());
        kv("test.draws_per_sample", self.draws_per_sample.to_string());
        kv("test.mle_runs", self.mle_runs.to_string());
        kv(
            "test.ilr_ties",
            match self.ilr_ties {
                TieRule::Ordered => "ordered",
                TieRule::Randomized => "randomized",
            }
            .into(),
        );
        kv("threads", optional(&self.threads));
        kv("report.svg", self.svg.to_string());
        for (k, v) in self.power.entries() {
            kv(&format!("power.{k}"), v);
        }
        s
    }
}

/// Parse a `family:kappa` kernel, as used by the power experiment keys.
pub(crate) fn parse_kernel(key: &str, v: &str) -> Result<KernelSpec> {
    let (f, k) = v
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{key}: expected family:kappa, got '{v}'")))?;
    KernelSpec::new(f.parse()?, parse(key, k)?)
}

/// Parse a `mean:var` sojourn.
pub(crate) fn parse_sojourn(key: &str, v: &str) -> Result<Sojourn> {
    let (m, var) = v
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{key}: expected mean:var, got '{v}'")))?;
    Sojourn::new(parse(key, m)?, parse(key, var)?)
}
