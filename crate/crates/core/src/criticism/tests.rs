use std::sync::Arc;

use approx::assert_relative_eq;
use rand::Rng;

use super::*;
use crate::inference::SourcedExposure;
use crate::likelihood::{extract_partial_data, full_loglik, partial_loglik};
use crate::model::{HostEvents, HostPopulation, KernelSpec, ModelParams, Trajectory};
use crate::rng::{child_rng, rng_from_seed};
use crate::simulator::{simulate, SimulationOptions, Source};

fn epidemic(params: &ModelParams, n: usize, seed: u64) -> Trajectory {
    let mut rng = rng_from_seed(seed);
    let side = 2000.0 * (n as f64 / 150.0).sqrt();
    let pop = Arc::new(HostPopulation::uniform(n, side, &mut rng).unwrap());
    simulate(params, &pop, &SimulationOptions::full_infection(), &mut rng).unwrap()
}

fn state(params: ModelParams, aug: Trajectory) -> ChainState {
    ChainState {
        params,
        aug,
        log_posterior: 0.0,
        iteration: 0,
    }
}

// ---------------------------------------------------------------- Anderson–Darling

#[test]
fn ad_statistic_of_three_quartiles() {
    let u = [0.25, 0.5, 0.75];
    let a2 = ad_statistic(&u).unwrap();
    // equivalent per-point form: -n - (1/n) sum (2i-1) ln u_i + (2(n-i)+1) ln(1-u_i)
    let n = 3.0;
    let oracle = -n
        - (1.0 * 0.25f64.ln() + 5.0 * 0.75f64.ln()
            + 3.0 * 0.5f64.ln() + 3.0 * 0.5f64.ln()
            + 5.0 * 0.75f64.ln() + 1.0 * 0.25f64.ln())
            / n;
    assert_relative_eq!(a2, oracle, max_relative = 1e-14);
    assert!((a2 - 0.2694).abs() < 1e-4, "A2 = {a2}");
}

#[test]
fn ad_statistic_of_single_midpoint() {
    let a2 = ad_statistic(&[0.5]).unwrap();
    assert_relative_eq!(a2, 2.0 * 2f64.ln() - 1.0, max_relative = 1e-14);
}

#[test]
fn ad_rejects_empty_and_clamps_edges() {
    assert!(anderson_darling(&[]).is_err());
    let r = anderson_darling(&[0.0, 1.0, 0.5]).unwrap();
    assert!(r.statistic.is_finite());
    assert!((0.0..=1.0).contains(&r.p_value));
}

#[test]
fn ad_limit_matches_tabulated_quantiles() {
    // upper 10%, 5%, 1% points of the limiting A2 distribution
    for (z, cdf) in [(1.933, 0.90), (2.492, 0.95), (3.857, 0.99)] {
        assert!((ad_limit_cdf(z) - cdf).abs() < 1e-3, "z={z}: {}", ad_limit_cdf(z));
    }
    assert!(ad_cdf(10, 0.5) > 0.0 && ad_cdf(10, 0.5) < 1.0);
}

#[test]
fn ad_null_p_values_are_uniform() {
    let mut rng = rng_from_seed(11);
    let bins = 10;
    let mut counts = vec![0usize; bins];
    let reps = 1000;
    for _ in 0..reps {
        let u: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let p = anderson_darling(&u).unwrap().p_value;
        counts[((p * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let e = reps as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // chi-square, 9 df, upper 1%
    assert!(chi2 < 21.666, "chi2 = {chi2}, counts {counts:?}");
}

// ---------------------------------------------------------------- MLE

/// Every exposure happens before anyone becomes infectious, so the kernel terms vanish
/// and the transmission likelihood is `n ln(alpha) - alpha * total susceptible time`.
fn background_only() -> Trajectory {
    let pop = Arc::new(
        HostPopulation::new((0..5).map(|k| [k as f64, 0.0]).collect(), 10.0).unwrap(),
    );
    let hosts = (0..5)
        .map(|k| HostEvents {
            exposure: Some(1.0 + k as f64),
            infection: Some(10.0 + k as f64),
            removal: Some(11.0 + 1.5 * k as f64),
        })
        .collect();
    Trajectory::new(pop, hosts, 20.0).unwrap()
}

#[test]
fn background_rate_has_closed_form_mle() {
    let traj = background_only();
    let mut rng = rng_from_seed(1);
    let fit = maximize_full(
        &traj,
        KernelFamily::Exponential,
        &ModelParams::original(),
        &MleOptions::default(),
        &mut rng,
    )
    .unwrap();
    // five exposures over 1 + 2 + 3 + 4 + 5 units of susceptible time
    let expected = 5.0 / 15.0;
    assert!(((fit.params.alpha - expected) / expected).abs() < 1e-4, "alpha = {}", fit.params.alpha);
}

#[test]
fn full_fit_dominates_start_and_random_points() {
    let truth = ModelParams::original();
    let traj = epidemic(&truth, 30, 3);
    let mut rng = rng_from_seed(4);
    let fit = maximize_full(&traj, KernelFamily::PowerLaw, &truth, &MleOptions::default(), &mut rng).unwrap();
    assert!(fit.loglik_at_max.is_finite());
    let direct = full_loglik(&fit.params, &traj).unwrap().value;
    assert_relative_eq!(direct, fit.loglik_at_max, max_relative = 1e-9);
    for _ in 0..200 {
        let mut p = fit.params;
        for param in crate::model::Param::ALL {
            let v = p.get(param) * (0.3 * (rng.random::<f64>() - 0.5)).exp();
            p.set(param, v);
        }
        let ll = full_loglik(&p, &traj).unwrap().value;
        assert!(ll <= fit.loglik_at_max + 1e-9, "{ll} > {}", fit.loglik_at_max);
    }
}

/// `max over alpha` of the direct partial likelihood at fixed kappa, by golden section
/// on ln(alpha).
fn profile_alpha(z: &crate::likelihood::PartialData, kernel: &KernelSpec) -> f64 {
    let f = |la: f64| partial_loglik(kernel, la.exp(), 1.0, z).value;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-20.0, 10.0);
    for _ in 0..120 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

#[test]
fn partial_fit_agrees_with_grid_search() {
    let truth = ModelParams::original();
    let traj = epidemic(&truth, 30, 5);
    let z = extract_partial_data(&traj);
    let mut rng = rng_from_seed(6);
    let fit = maximize_partial(&z, KernelFamily::Exponential, &truth, &MleOptions::default(), &mut rng).unwrap();
    assert_eq!(fit.params.beta, 1.0);

    let (lo, hi) = (1e-4f64.ln(), 1.0f64.ln());
    let points = 500;
    let spacing = (hi - lo) / (points - 1) as f64;
    let (mut best_k, mut best_v) = (f64::NAN, f64::NEG_INFINITY);
    for k in 0..points {
        let lk = lo + spacing * k as f64;
        let v = profile_alpha(&z, &KernelSpec::new(KernelFamily::Exponential, lk.exp()).unwrap());
        if v > best_v {
            best_v = v;
            best_k = lk;
        }
    }
    assert!(fit.loglik_at_max >= best_v - 1e-9, "{} < grid {best_v}", fit.loglik_at_max);
    let gap = (fit.params.kernel.kappa.ln() - best_k).abs();
    assert!(gap <= 2.0 * spacing, "ln kappa gap {gap}, grid spacing {spacing}");
}

#[test]
fn fit_never_falls_below_its_start() {
    let truth = ModelParams::original();
    let traj = epidemic(&truth, 20, 7);
    let mut rng = rng_from_seed(8);
    let z = extract_partial_data(&traj);
    let start = partial_loglik(&truth.kernel, truth.alpha / truth.beta, 1.0, &z).value;
    let fit = maximize_partial(&z, KernelFamily::Exponential, &truth, &MleOptions::default(), &mut rng).unwrap();
    assert!(fit.loglik_at_max >= start - 1e-12);
    assert!(fit.evaluations > 0);
}

// ---------------------------------------------------------------- LLR

#[test]
fn same_family_log_ratio_is_never_positive() {
    let mut rng = rng_from_seed(9);
    for seed in 0..6 {
        for family in KernelFamily::ALL {
            let mut truth = ModelParams::original();
            truth.kernel = KernelSpec::new(family, family.kappa_for_level(200.0, 0.2)).unwrap();
            let traj = epidemic(&truth, 25, 100 + seed);
            let lt = log_ratio(Objective::Full, &traj, &truth, family, &MleOptions::default(), &mut rng).unwrap();
            assert!(lt <= 1e-9, "{family:?} seed {seed}: log T = {lt}");
            let lp = log_ratio(Objective::Partial, &traj, &truth, family, &MleOptions::default(), &mut rng).unwrap();
            assert!(lp <= 1e-9, "{family:?} seed {seed}: partial log T = {lp}");
        }
    }
}

#[test]
fn partial_ratio_ignores_time_units() {
    let truth = ModelParams::original();
    let traj = epidemic(&truth, 25, 12);
    let scaled = traj.rescale_time(3.7).unwrap();
    let opts = MleOptions::default();
    let a = log_ratio(Objective::Partial, &traj, &truth, KernelFamily::PowerLaw, &opts, &mut rng_from_seed(1)).unwrap();
    let b = log_ratio(Objective::Partial, &scaled, &truth, KernelFamily::PowerLaw, &opts, &mut rng_from_seed(1)).unwrap();
    assert_relative_eq!(a, b, max_relative = 1e-12);
}

#[test]
fn exceedance_counts_ties_as_half() {
    assert_eq!(exceedance(0.0, &[-1.0]), 1.0);
    assert_eq!(exceedance(0.0, &[1.0]), 0.0);
    assert_eq!(exceedance(0.0, &[0.0]), 0.5);
    assert_eq!(exceedance(0.0, &[-1.0, 0.0, 1.0, 2.0]), 0.375);
    assert!(exceedance(0.0, &[]).is_nan());
}

#[test]
fn reference_draws_keep_population_and_horizon() {
    let truth = ModelParams::original();
    let traj = epidemic(&truth, 20, 13).censor(12.0).unwrap();
    let x = simulate_reference(&truth, &traj, &mut rng_from_seed(2)).unwrap();
    assert_eq!(x.t_max(), traj.t_max());
    assert!(Arc::ptr_eq(x.population(), traj.population()));
}

#[test]
fn llr_on_true_trajectories_is_not_significant() {
    // states are exact draws from the null, so each exceedance is a valid p-value
    let truth = ModelParams::original();
    let samples: Vec<ChainState> = (0..40).map(|s| state(truth, epidemic(&truth, 20, 200 + s))).collect();
    let opts = LlrtOptions::new(Objective::Full);
    let report = llrt_pvalue_mean(&samples, KernelFamily::PowerLaw, &opts, 5).unwrap();
    assert_eq!(report.n_samples, 40);
    assert_eq!(report.test, TestKind::LlrFull);
    assert!(report.e_hat_p > 0.3 && report.e_hat_p < 0.7, "E(p) = {}", report.e_hat_p);
}

#[test]
fn llr_report_is_seed_deterministic() {
    let truth = ModelParams::original();
    let samples: Vec<ChainState> = (0..4).map(|s| state(truth, epidemic(&truth, 15, 300 + s))).collect();
    let opts = LlrtOptions::new(Objective::Partial);
    let a = llrt_pvalue_mean(&samples, KernelFamily::Gaussian, &opts, 9).unwrap();
    let b = llrt_pvalue_mean(&samples, KernelFamily::Gaussian, &opts, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.alternative, Some(KernelFamily::Gaussian));
}

// ---------------------------------------------------------------- ILR

#[test]
fn exposure_with_nobody_infectious_has_no_residual() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0]], 1.0).unwrap());
    let hosts = vec![HostEvents {
        exposure: Some(1.0),
        infection: Some(2.0),
        removal: Some(3.0),
    }];
    let s = state(ModelParams::original(), Trajectory::new(pop, hosts, 5.0).unwrap());
    let src = [SourcedExposure {
        event: 0,
        exposed: 0,
        time: 1.0,
        source: Source::Primary,
    }];
    let mut rng = rng_from_seed(1);
    assert!(ilr_residuals(&s, &src, TieRule::default(), &mut rng).unwrap().is_empty());
}

#[test]
fn single_link_residual_is_uniform_over_imputed_sources() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [30.0, 0.0]], 100.0).unwrap());
    let hosts = vec![
        HostEvents {
            exposure: Some(0.5),
            infection: Some(1.0),
            removal: Some(10.0),
        },
        HostEvents {
            exposure: Some(2.0),
            infection: Some(3.0),
            removal: Some(4.0),
        },
    ];
    let params = ModelParams::original();
    let s = state(params, Trajectory::new(pop, hosts, 12.0).unwrap());
    let mut rng = rng_from_seed(2);
    let draws: Vec<f64> = (0..4000)
        .map(|_| {
            let src = impute_sources(&params, &s.aug, &mut rng).unwrap();
            let r = ilr_residuals(&s, &src, TieRule::default(), &mut rng).unwrap();
            assert_eq!(r.len(), 1);
            r[0]
        })
        .collect();
    assert!(anderson_darling(&draws).unwrap().p_value > 0.01);
}

#[test]
fn residuals_require_matching_sources() {
    let truth = ModelParams::original();
    let s = state(truth, epidemic(&truth, 10, 14));
    let mut rng = rng_from_seed(3);
    let src = impute_sources(&truth, &s.aug, &mut rng).unwrap();
    assert!(ilr_residuals(&s, &src[1..], TieRule::default(), &mut rng).is_err());
    let r = ilr_residuals(&s, &src, TieRule::default(), &mut rng).unwrap();
    let linked = extract_partial_data(&s.aug)
        .events()
        .iter()
        .filter(|ev| !ev.infectious.is_empty())
        .count();
    assert_eq!(r.len(), linked);
    assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn residuals_under_the_true_model_are_uniform() {
    let truth = ModelParams::original();
    let mut pooled = Vec::new();
    for seed in 0..40 {
        let s = state(truth, epidemic(&truth, 30, 400 + seed));
        let mut rng = rng_from_seed(seed);
        let src = impute_sources(&truth, &s.aug, &mut rng).unwrap();
        pooled.extend(ilr_residuals(&s, &src, TieRule::default(), &mut rng).unwrap());
    }
    let p = anderson_darling(&pooled).unwrap().p_value;
    assert!(p > 0.01, "pooled residual AD p = {p} over {} values", pooled.len());
}

#[test]
fn single_state_ilr_equals_its_ad_p_value() {
    let truth = ModelParams::original();
    let s = state(truth, epidemic(&truth, 20, 15));
    let report = ilr_test(std::slice::from_ref(&s), TieRule::default(), 21).unwrap();
    let mut rng = child_rng(21, 0);
    let src = impute_sources(&truth, &s.aug, &mut rng).unwrap();
    let r = ilr_residuals(&s, &src, TieRule::default(), &mut rng).unwrap();
    assert_eq!(report.e_hat_p, anderson_darling(&r).unwrap().p_value);
    assert_eq!(report.n_samples, 1);
    assert_eq!(report.dropped, 0);
}

#[test]
fn test_kind_names_round_trip() {
    for k in TestKind::ALL {
        assert_eq!(TestKind::from_cli(k.cli_name()).unwrap(), k);
    }
    assert!(TestKind::from_cli("llr").is_err());
    assert_eq!(serde_json::to_string(&TestKind::LlrPartial).unwrap(), "\"LLR-partial\"");
}

#[test]
fn fits_start_from_extreme_parameters() {
    let truth = ModelParams::original();
    let x = epidemic(&truth, 25, 77);
    let extreme = ModelParams {
        beta: 1e-36,
        kernel: KernelSpec::new(crate::model::KernelFamily::Gaussian, 1e-26).unwrap(),
        ..truth
    };
    let mut rng = rng_from_seed(5);
    for objective in [Objective::Full, Objective::Partial] {
        for alt in crate::model::KernelFamily::ALL {
            let t = log_ratio(objective, &x, &extreme, alt, &MleOptions::default(), &mut rng);
            assert!(t.as_ref().is_ok_and(|t| t.is_finite()), "{objective:?} {alt}: {t:?}");
        }
    }
}
