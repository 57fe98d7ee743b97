use std::fs;

use proptest::prelude::*;

use super::power::sorted_exceedance;
use super::*;
use crate::criticism::{exceedance, TestKind};
use crate::gamma::GammaSojourn;
use crate::model::{KernelFamily, Param};

#[test]
fn parameter_sets_follow_the_generating_table() {
    let o = ParamSet::Original.params();
    assert_eq!((o.alpha, o.beta, o.kernel.kappa), (0.001, 3.0, 0.03));
    assert_eq!((o.latent.mean, o.latent.var), (5.0, 2.5));
    assert_eq!((o.infectious.mean, o.infectious.var), (1.772, 0.858));
    assert_eq!(ParamSet::AlphaX2.params().alpha, 0.002);
    assert_eq!(ParamSet::BetaX2.params().beta, 6.0);
    let k = ParamSet::KappaX2.params();
    assert_eq!(k.kernel.kappa, 0.06);
    assert_eq!(k.with(Param::Kappa, 0.03), o);
    for set in ParamSet::ALL {
        assert_eq!(set.params().kernel.family, KernelFamily::Exponential);
        assert_eq!(ParamSet::from_tag(set.tag()).unwrap(), set);
    }
}

#[test]
fn infectious_sojourn_shape_and_rate() {
    let s = ParamSet::Original.params().infectious;
    let g = GammaSojourn::from_mean_var(s.mean, s.var).unwrap();
    assert!((s.shape() - 3.6597).abs() < 1e-4, "shape {}", s.shape());
    assert!((s.rate() - 2.0653).abs() < 1e-4, "rate {}", s.rate());
    assert!((g.mean() - 1.772).abs() < 1e-12);
}

#[test]
fn config_text_round_trips() {
    let cfg = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    let mut changed = cfg.clone();
    changed
        .apply_overrides(&[
            "n_hosts=40",
            "windows=1.0,0.5",
            "fitted_kernels=gauss",
            "placement_seed=9",
            "test.ilr_ties=ordered",
            "power.alt.kernel=gauss:0.01",
            "power.latent=3:2",
        ])
        .unwrap();
    assert_eq!(ExperimentConfig::from_text(&changed.to_text()).unwrap(), changed);
    assert_eq!(changed.windows, vec![1.0, 0.5]);
    assert_eq!(changed.power.alt.kernel.family, KernelFamily::Gaussian);
    assert_eq!(changed.power.null.latent.mean, 3.0);
}

#[test]
fn config_comments_and_blank_lines() {
    let cfg = ExperimentConfig::from_text("# header\n\nn_hosts = 30  # small\nseed=5\n").unwrap();
    assert_eq!((cfg.n_hosts, cfg.seed), (30, 5));
    assert_eq!(cfg.region_side, 2000.0);
}

#[test]
fn config_rejects_bad_input() {
    for text in [
        "no_such_key = 1",
        "windows = 1.0, 1.5",
        "windows = 0",
        "n_hosts = many",
        "just a line",
        "alt_kernel = cauchy",
        "power.n_hosts = 50",
        "mcmc.burn_in = 30000",
    ] {
        assert!(ExperimentConfig::from_text(text).is_err(), "accepted {text:?}");
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_overrides(&[
        "n_hosts=20",
        "region_side=300",
        "datasets=original,kappa_x2",
        "fitted_kernels=pow",
        "windows=1.0,0.5",
        "mcmc.iterations=300",
        "test.samples=6",
        "test.mle_runs=2",
        "seed=11",
    ])
    .unwrap();
    cfg
}

#[test]
fn windows_record_the_realized_fraction() {
    let mut cfg = small_config();
    cfg.apply_overrides(&["n_hosts=23", "windows=1.0,0.7,0.4,0.33"]).unwrap();
    for d in generate_datasets(&cfg).unwrap() {
        assert_eq!(d.trajectory.infected_count(), 23);
        for w in &d.windows {
            let needed = crate::model::window_count(w.fraction, 23);
            assert_eq!(w.observed.infected_count(), needed);
            assert_eq!(w.realized_fraction, needed as f64 / 23.0);
            assert_eq!(w.observed.t_max(), w.t_cut);
        }
    }
}

#[test]
fn datasets_depend_only_on_seeds() {
    let cfg = small_config();
    let a = generate_datasets(&cfg).unwrap();
    let b = generate_datasets(&cfg).unwrap();
    assert_eq!(a.len(), 2);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.trajectory, y.trajectory);
        assert_eq!(x.seed, y.seed);
    }
    let mut moved = cfg.clone();
    moved.placement_seed = Some(cfg.placement_seed() + 1);
    let c = generate_datasets(&moved).unwrap();
    assert_ne!(a[0].trajectory.population().coords(), c[0].trajectory.population().coords());
}

#[test]
fn dataset_files_are_written() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_datasets(&cfg).unwrap();
    write_datasets(&ds, dir.path()).unwrap();
    assert!(dir.path().join("population.csv").is_file());
    for tag in ["original", "kappa_x2"] {
        for f in ["events.csv", "window_100.csv", "window_50.csv", "dataset.json"] {
            assert!(dir.path().join(tag).join(f).is_file(), "{tag}/{f}");
        }
    }
    let obs = crate::model::read_observed(
        fs::File::open(dir.path().join("original/window_50.csv")).unwrap(),
        cfg.region_side,
        Some(ds[0].windows[1].t_cut),
    )
    .unwrap();
    assert_eq!(obs.infected_count(), 10);
}

#[test]
fn matrix_layout_matches_the_configuration() {
    let cfg = ExperimentConfig::default();
    let cells = matrix_cells(&cfg);
    assert_eq!(cells.iter().filter(|c| !c.control).count(), 24);
    let control: Vec<_> = cells.iter().filter(|c| c.control).collect();
    assert_eq!(control.len(), 3);
    assert!(control
        .iter()
        .all(|c| c.fitted == KernelFamily::Exponential && c.alternative == KernelFamily::Gaussian));
    let mut ids: Vec<String> = cells.iter().map(CellSpec::id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 27);
    let seeds: std::collections::HashSet<u64> = cells.iter().map(|c| c.sub_seed(cfg.seed)).collect();
    assert_eq!(seeds.len(), 27);
}

#[test]
fn empty_matrix_gives_header_only_tables() {
    let mut cfg = small_config();
    cfg.fitted_kernels.clear();
    cfg.control = false;
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_datasets(&cfg).unwrap();
    assert!(run_matrix(&cfg, &ds, Some(dir.path())).unwrap().is_empty());
    let files = report(dir.path()).unwrap();
    let header = TABLE_HEADER.join(",") + "\n";
    assert_eq!(fs::read_to_string(files.table2).unwrap(), header);
    assert_eq!(fs::read_to_string(files.table3).unwrap(), header);
    assert!(files.barcharts.is_empty());
}

#[test]
fn report_on_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let files = report(dir.path()).unwrap();
    assert_eq!(fs::read_to_string(files.table2).unwrap().lines().count(), 1);
}

#[test]
fn small_matrix_end_to_end() {
    let cfg = small_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (cells, files) = run_experiment(&cfg, a.path()).unwrap();
    assert_eq!(cells.len(), 4 + 2);
    for c in &cells {
        assert!(c.errors.is_empty(), "{}: {:?}", c.id, c.errors);
        assert_eq!(c.reports.len(), 3);
        assert_eq!(c.sub_seed, c.spec.sub_seed(cfg.seed));
        for r in &c.reports {
            assert!((0.0..=1.0).contains(&r.e_hat_p));
            assert_eq!(r.n_samples + r.dropped, cfg.test_samples);
            assert_eq!(r.window, c.realized_fraction);
        }
    }
    let t2 = fs::read_to_string(&files.table2).unwrap();
    assert_eq!(t2.lines().count(), 1 + 4);
    assert!(t2.lines().nth(1).unwrap().starts_with("Original,(1+d^k)^-1,100,"));
    assert_eq!(fs::read_to_string(&files.table3).unwrap().lines().count(), 1 + 2);
    assert_eq!(files.barcharts.len(), 2);
    assert!(a.path().join("barchart_original.svg").is_file());
    let index: MatrixIndex = serde_json::from_slice(&fs::read(a.path().join("index.json")).unwrap()).unwrap();
    assert_eq!(index.cells.len(), 6);

    // idempotent report
    let before: Vec<Vec<u8>> = ["table2.csv", "table3.csv", "manifest.json", "barchart_original.csv"]
        .iter()
        .map(|f| fs::read(a.path().join(f)).unwrap())
        .collect();
    report(a.path()).unwrap();
    for (f, old) in ["table2.csv", "table3.csv", "manifest.json", "barchart_original.csv"].iter().zip(&before) {
        assert_eq!(&fs::read(a.path().join(f)).unwrap(), old, "{f} changed");
    }

    // determinism
    run_experiment(&cfg, b.path()).unwrap();
    for f in ["table2.csv", "table3.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }

    // single-cell replay from the recorded sub-seed
    let ds = generate_datasets(&cfg).unwrap();
    let target = &cells[1];
    let d = ds.iter().find(|d| d.set == target.spec.dataset).unwrap();
    assert_eq!(&run_cell(&cfg, d, &target.spec), target);
}

#[test]
fn a_failing_cell_does_not_stop_the_others() {
    let cfg = small_config();
    let ds = generate_datasets(&cfg).unwrap();
    let bad = CellSpec {
        dataset: ParamSet::Original,
        fitted: KernelFamily::PowerLaw,
        alternative: KernelFamily::Exponential,
        window: 0.25,
        control: false,
    };
    let r = run_cell(&cfg, &ds[0], &bad);
    assert!(r.reports.is_empty());
    assert_eq!(r.errors.len(), 1);

    let mut only_control = cfg.clone();
    only_control.fitted_kernels.clear();
    only_control.tests = vec![TestKind::Ilr];
    let cells = run_matrix(&only_control, &ds, None).unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|c| c.errors.is_empty() && c.reports.len() == 1));
}

#[test]
fn barchart_svg_is_self_contained() {
    let svg = barchart_svg("a < b", &[("Pow (100)".into(), [Some(0.1), None, Some(1.0)])]);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("a &lt; b"));
    assert_eq!(svg.matches("<rect").count(), 2 + 3);
}

fn toy() -> PowerConfig {
    PowerConfig {
        replicates: 60,
        mcmc_iterations: 600,
        reference_draws: 500,
        ..PowerConfig::default()
    }
}

#[test]
fn zero_level_never_rejects() {
    let (latent, complete) = estimate_latent_power(&toy(), 0.0, 30, 1).unwrap();
    assert_eq!((latent.beta_hat, complete.beta_hat), (0.0, 0.0));
    assert_eq!(latent.mode, PowerMode::LatentX);
    assert_eq!(complete.mode, PowerMode::CompleteX);
}

#[test]
fn size_under_the_null_matches_the_level() {
    let cfg = PowerConfig {
        reference_draws: 2000,
        ..toy()
    };
    let (latent, complete) = rejection_rates(&cfg, &cfg.null, 0.1, 300, 2).unwrap();
    let binomial_se = (0.1f64 * 0.9 / 300.0).sqrt();
    for e in [latent, complete] {
        assert!((e.beta_hat - 0.1).abs() <= 3.0 * e.standard_error.max(binomial_se), "{e:?}");
    }
}

#[test]
fn latent_power_does_not_exceed_complete_data_power() {
    let (latent, complete) = estimate_latent_power(&toy(), 0.05, 60, 3).unwrap();
    let pooled = latent.standard_error.hypot(complete.standard_error);
    assert!(latent.beta_hat <= complete.beta_hat + 2.0 * pooled, "{latent:?} {complete:?}");
    assert!((0.0..=1.0).contains(&latent.beta_hat) && (0.0..=1.0).contains(&complete.beta_hat));
}

#[test]
fn toy_size_is_bounded() {
    let cfg = PowerConfig {
        n_hosts: MAX_TOY_HOSTS + 1,
        ..toy()
    };
    assert!(estimate_latent_power(&cfg, 0.05, 10, 0).is_err());
}

proptest! {
    #[test]
    fn sorted_exceedance_matches_the_linear_scan(
        mut refs in prop::collection::vec(-3i32..3, 1..40),
        t in -4i32..4,
    ) {
        let refs: Vec<f64> = { refs.sort(); refs.iter().map(|&v| v as f64).collect() };
        prop_assert_eq!(sorted_exceedance(t as f64, &refs), exceedance(t as f64, &refs));
    }
}

#[test]
fn chain_directory_round_trips() {
    use crate::inference::{run_chains, ChainSettings, PriorSpec};
    let cfg = small_config();
    let ds = generate_datasets(&cfg).unwrap();
    let y = &ds[0].windows[1].observed;
    let settings = ChainSettings {
        iterations: 200,
        thin: Some(40),
        ..ChainSettings::default()
    };
    let kernel = crate::model::KernelSpec::new(KernelFamily::Gaussian, 1e-4).unwrap();
    let chains = run_chains(y, &PriorSpec::default(), &kernel, &settings, 4, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_chains(dir.path(), KernelFamily::Gaussian, &settings, &chains).unwrap();
    let (manifest, states) = read_chains(dir.path()).unwrap();
    assert_eq!(manifest.chains.len(), 2);
    let expected: Vec<_> = chains.iter().flat_map(|c| c.samples.iter()).collect();
    assert_eq!(states.len(), expected.len());
    for (a, b) in states.iter().zip(expected) {
        assert_eq!(a.params, b.params);
        assert_eq!(a.aug, b.aug);
        assert_eq!(a.iteration, b.iteration);
    }
}
