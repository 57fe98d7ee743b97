//! Latent tests of a fitted kernel.
//!
//! Each test turns every retained posterior state into a classical p-value computed
//! on the imputed latent data, and summarises the posterior by the mean of those
//! p-values:
//!
//! * ILR: infection-link residuals of the imputed sources, tested for uniformity by
//!   Anderson–Darling.
//! * LLR-full / LLR-partial: the latent likelihood ratio against an alternative kernel
//!   family, referred to one simulated reference statistic per state.

mod ad;
mod ilr;
mod llrt;
mod mle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{impute_sources, ChainState};
use crate::model::KernelFamily;
use crate::rng::child_rng;

pub use ad::{ad_cdf, ad_limit_cdf, ad_statistic, anderson_darling, AndersonDarling};
pub use ilr::{ilr_residuals, TieRule};
pub use llrt::{exceedance, log_ratio, sample_statistics, simulate_reference, LlrtOptions};
pub use mle::{maximize_full, maximize_loglik, maximize_partial, MleOptions, MleResult, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "ILR")]
    Ilr,
    #[serde(rename = "LLR-full")]
    LlrFull,
    #[serde(rename = "LLR-partial")]
    LlrPartial,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Ilr, TestKind::LlrFull, TestKind::LlrPartial];

    pub fn tag(self) -> &'static str {
        match self {
            TestKind::Ilr => "ILR",
            TestKind::LlrFull => "LLR-full",
            TestKind::LlrPartial => "LLR-partial",
        }
    }

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            TestKind::Ilr => "ilr",
            TestKind::LlrFull => "llr-full",
            TestKind::LlrPartial => "llr-partial",
        }
    }

    pub fn from_cli(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown test {s:?}; expected ilr, llr-full or llr-partial")))
    }

    pub fn objective(self) -> Option<Objective> {
        match self {
            TestKind::Ilr => None,
            TestKind::LlrFull => Some(Objective::Full),
            TestKind::LlrPartial => Some(Objective::Partial),
        }
    }
}

/// Per-state diagnostics. `p_value` is the AD p-value (ILR) or the exceedance
/// frequency of the reference draws (LLR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub iteration: usize,
    pub p_value: Option<f64>,
    pub log_t: Option<f64>,
    pub log_t_reference: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub dataset: String,
    pub fitted: KernelFamily,
    pub alternative: Option<KernelFamily>,
    pub window: f64,
    pub test: TestKind,
    pub e_hat_p: f64,
    /// States that produced a p-value.
    pub n_samples: usize,
    /// States dropped because a fit or simulation failed.
    pub dropped: usize,
    pub seed: u64,
    pub per_sample: Vec<SampleOutcome>,
}

impl TestReport {
    /// Attach the dataset tag and observation window.
    pub fn labelled(mut self, dataset: impl Into<String>, window: f64) -> Self {
        self.dataset = dataset.into();
        self.window = window;
        self
    }
}

fn fitted_family(samples: &[ChainState]) -> Result<KernelFamily> {
    samples
        .first()
        .map(|s| s.params.kernel.family)
        .ok_or_else(|| Error::domain("no retained samples"))
}

fn summarise(
    test: TestKind,
    fitted: KernelFamily,
    alternative: Option<KernelFamily>,
    seed: u64,
    per_sample: Vec<SampleOutcome>,
) -> Result<TestReport> {
    let p: Vec<f64> = per_sample.iter().filter_map(|o| o.p_value).collect();
    if p.is_empty() {
        let reason = per_sample
            .iter()
            .find_map(|o| o.error.clone())
            .unwrap_or_else(|| "no usable samples".into());
        return Err(Error::Optimisation(format!("{}: every sample failed ({reason})", test.tag())));
    }
    let e_hat_p = crate::numeric::compensated_sum(p.iter().copied()) / p.len() as f64;
    Ok(TestReport {
        dataset: String::new(),
        fitted,
        alternative,
        window: 1.0,
        test,
        e_hat_p: e_hat_p.clamp(0.0, 1.0),
        n_samples: p.len(),
        dropped: per_sample.len() - p.len(),
        seed,
        per_sample,
    })
}

/// ILR test: mean over retained states of the AD p-value of their residuals.
pub fn ilr_test(samples: &[ChainState], ties: TieRule, seed: u64) -> Result<TestReport> {
    let fitted = fitted_family(samples)?;
    let per_sample: Vec<SampleOutcome> = samples
        .par_iter()
        .enumerate()
        .map(|(i, state)| {
            let mut rng = child_rng(seed, i as u64);
            let p = impute_sources(&state.params, &state.aug, &mut rng)
                .and_then(|src| ilr_residuals(state, &src, ties, &mut rng))
                .and_then(|r| anderson_darling(&r));
            outcome(state.iteration, p.map(|ad| (ad.p_value, None, Vec::new())))
        })
        .collect();
    summarise(TestKind::Ilr, fitted, None, seed, per_sample)
}

/// Latent likelihood ratio test against kernel family `alt`.
pub fn llrt_pvalue_mean(
    samples: &[ChainState],
    alt: KernelFamily,
    opts: &LlrtOptions,
    seed: u64,
) -> Result<TestReport> {
    let fitted = fitted_family(samples)?;
    let test = match opts.objective {
        Objective::Full => TestKind::LlrFull,
        Objective::Partial => TestKind::LlrPartial,
    };
    let per_sample: Vec<SampleOutcome> = samples
        .par_iter()
        .enumerate()
        .map(|(i, state)| {
            let mut rng = child_rng(seed, i as u64);
            let r = sample_statistics(&state.aug, &state.params, alt, opts, &mut rng)
                .map(|(t, refs)| (exceedance(t, &refs), Some(t), refs));
            outcome(state.iteration, r)
        })
        .collect();
    summarise(test, fitted, Some(alt), seed, per_sample)
}

fn outcome(iteration: usize, r: Result<(f64, Option<f64>, Vec<f64>)>) -> SampleOutcome {
    match r {
        Ok((p, log_t, log_t_reference)) => SampleOutcome {
            iteration,
            p_value: Some(p),
            log_t,
            log_t_reference,
            error: None,
        },
        Err(e) => SampleOutcome {
            iteration,
            p_value: None,
            log_t: None,
            log_t_reference: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests;
