use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::seq::SliceRandom;

use super::*;
use crate::model::{
    exposure_rate, total_pressure, HostEvents, HostPopulation, KernelFamily, KernelSpec, Sojourn,
};
use crate::rng::rng_from_seed;
use crate::simulator::{simulate, InitialCondition, SimulationOptions, StopRule};

fn toy_params(family: KernelFamily) -> ModelParams {
    ModelParams {
        alpha: 0.02,
        beta: 0.6,
        kernel: KernelSpec::new(family, 0.7).unwrap(),
        latent: Sojourn::new(1.5, 0.8).unwrap(),
        infectious: Sojourn::new(2.0, 1.5).unwrap(),
    }
}

fn random_trajectory(n: usize, family: KernelFamily, horizon: f64, seed: u64) -> Trajectory {
    let mut rng = rng_from_seed(seed);
    let pop = Arc::new(HostPopulation::uniform(n, 6.0, &mut rng).unwrap());
    let opts = SimulationOptions {
        stop: StopRule::Horizon(horizon),
        initial: InitialCondition::Seeded(vec![0]),
    };
    simulate(&toy_params(family), &pop, &opts, &mut rng).unwrap()
}

fn ev(e: Option<f64>, i: Option<f64>, r: Option<f64>) -> HostEvents {
    HostEvents {
        exposure: e,
        infection: i,
        removal: r,
    }
}

/// Three hosts on a line; host 0 is infected from the background, infects host 1,
/// host 2 escapes. Host 1 is still infectious at the horizon.
fn three_host() -> Trajectory {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [1.0, 0.5], [2.5, 0.0]], 4.0).unwrap());
    let hosts = vec![
        ev(Some(0.4), Some(1.3), Some(3.1)),
        ev(Some(2.2), Some(3.7), None),
        HostEvents::NEVER,
    ];
    Trajectory::new(pop, hosts, 5.0).unwrap()
}

fn sets_at(traj: &Trajectory, t: f64) -> (Vec<HostId>, Vec<HostId>) {
    let s = (0..traj.len()).filter(|&h| traj.host(h).susceptible_before(t)).collect();
    (s, traj.infectious_before(t))
}

/// Log-likelihood computed from its definition: log-rates at the exposure events,
/// the pressure integral by midpoint quadrature on a fine grid refined at every
/// event time, and the sojourn terms one host at a time.
fn quadrature_oracle(params: &ModelParams, traj: &Trajectory, grid: usize) -> f64 {
    let pop = traj.population();
    let t_max = traj.t_max();
    let mut knots: Vec<f64> = (0..=grid).map(|k| t_max * k as f64 / grid as f64).collect();
    for h in traj.hosts() {
        knots.extend([h.exposure, h.infection, h.removal].into_iter().flatten());
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut integral = CompensatedSum::new();
    for w in knots.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        // sets on the open interval: state just after `mid`
        let (s, i) = sets_at(traj, mid);
        integral.add(total_pressure(params, pop, &s, &i).unwrap() * (w[1] - w[0]));
    }
    let mut total = -integral.value();
    let latent = params.latent.distribution().unwrap();
    let inf = params.infectious.distribution().unwrap();
    for (x, h) in traj.hosts().iter().enumerate() {
        if let Some(e) = h.exposure_event() {
            let i_set = traj.infectious_before(e);
            total += exposure_rate(params, pop, x, &i_set).unwrap().ln();
            total += match h.infection {
                Some(i) => latent.ln_pdf(i - e),
                None => latent.ln_sf(t_max - e),
            };
        }
        if let Some(i) = h.infection {
            total += match h.removal {
                Some(r) => inf.ln_pdf(r - i),
                None => inf.ln_sf(t_max - i),
            };
        }
    }
    total
}

#[test]
fn empty_host_is_pure_survival() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0]], 1.0).unwrap());
    let traj = Trajectory::new(pop, vec![HostEvents::NEVER], 7.5).unwrap();
    let p = ModelParams::original();
    let ll = full_loglik(&p, &traj).unwrap();
    assert_eq!(ll.value, -p.alpha * 7.5);
    assert!(!ll.is_impossible());
}

#[test]
fn three_host_matches_quadrature() {
    let traj = three_host();
    for family in KernelFamily::ALL {
        let p = toy_params(family);
        let exact = full_loglik(&p, &traj).unwrap().value;
        let oracle = quadrature_oracle(&p, &traj, 1_000_000);
        assert!((exact - oracle).abs() < 1e-6, "{family}: {exact} vs {oracle}");
    }
}

#[test]
fn random_trajectories_match_quadrature() {
    for seed in 0..6 {
        let family = KernelFamily::ALL[seed as usize % 3];
        let traj = random_trajectory(7, family, 8.0, seed);
        let p = toy_params(family);
        let exact = full_loglik(&p, &traj).unwrap().value;
        let oracle = quadrature_oracle(&p, &traj, 2_000);
        assert!((exact - oracle).abs() < 1e-8 * (1.0 + exact.abs()), "{exact} vs {oracle}");
    }
}

#[test]
fn zero_rate_exposure_is_flagged() {
    // exposure with nobody infectious and no background rate
    let traj = three_host();
    let p = ModelParams {
        alpha: 0.0,
        ..toy_params(KernelFamily::Exponential)
    };
    let ll = full_loglik(&p, &traj).unwrap();
    assert_eq!(ll.value, f64::NEG_INFINITY);
    assert_eq!(ll.zero_rate_events, 1);
}

#[test]
fn invalid_inputs_are_rejected() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0]], 1.0).unwrap());
    assert!(Trajectory::new(pop.clone(), vec![ev(Some(1.0), Some(0.5), None)], 3.0).is_err());
    let traj = Trajectory::new(pop, vec![ev(Some(1.0), Some(2.0), None)], 3.0).unwrap();
    let bad = ModelParams {
        alpha: -1.0,
        ..ModelParams::original()
    };
    assert!(full_loglik(&bad, &traj).is_err());
}

/// Transmission terms accrued on `(from, to]`, summed event by event.
fn sweep_transmission(params: &ModelParams, traj: &Trajectory, from: f64, to: f64) -> f64 {
    let pop = traj.population();
    let mut times: Vec<f64> = traj
        .hosts()
        .iter()
        .flat_map(|h| [h.exposure, h.infection, h.removal])
        .flatten()
        .filter(|&t| t > from && t < to)
        .collect();
    times.extend([from, to]);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut total = 0.0;
    for w in times.windows(2) {
        let (s, i) = sets_at(traj, 0.5 * (w[0] + w[1]));
        total -= total_pressure(params, pop, &s, &i).unwrap() * (w[1] - w[0]);
    }
    for (x, h) in traj.hosts().iter().enumerate() {
        if let Some(e) = h.exposure_event().filter(|&e| e > from && e <= to) {
            total += exposure_rate(params, pop, x, &traj.infectious_before(e)).unwrap().ln();
        }
    }
    total
}

#[test]
fn loglik_is_additive_over_an_event_free_split() {
    let traj = (0..)
        .map(|seed| random_trajectory(8, KernelFamily::PowerLaw, 9.0, seed))
        .find(|t| t.exposed_count() >= 4)
        .unwrap();
    let p = toy_params(KernelFamily::PowerLaw);
    let mut times: Vec<f64> = traj
        .hosts()
        .iter()
        .flat_map(|h| [h.exposure, h.infection, h.removal])
        .flatten()
        .filter(|&t| t > 0.0)
        .collect();
    times.sort_by(f64::total_cmp);
    assert!(times.len() >= 3);
    let split = 0.5 * (times[1] + times[2]);
    let head = full_loglik(&p, &traj.censor(split).unwrap()).unwrap().value;
    // remainder: transmission on (s, T] plus sojourn terms conditional on survival to s
    let latent = p.latent.distribution().unwrap();
    let inf = p.infectious.distribution().unwrap();
    let t_max = traj.t_max();
    let conditional = |dist: &GammaSojourn, start: f64, end: Option<f64>| -> f64 {
        let tail = match end {
            Some(e) => dist.ln_pdf(e - start),
            None => dist.ln_sf(t_max - start),
        };
        if start <= split {
            tail - dist.ln_sf(split - start)
        } else {
            tail
        }
    };
    let mut rest = sweep_transmission(&p, &traj, split, t_max);
    for h in traj.hosts() {
        if let Some(e) = h.exposure_event() {
            if h.infection.map_or(true, |i| i > split) {
                rest += conditional(&latent, e, h.infection);
            }
        }
        if let Some(i) = h.infection {
            if h.removal.map_or(true, |r| r > split) {
                rest += conditional(&inf, i, h.removal);
            }
        }
    }
    let whole = full_loglik(&p, &traj).unwrap().value;
    assert_relative_eq!(head + rest, whole, max_relative = 1e-11);
    // and the transmission part alone splits the same way
    let trans = transmission_loglik(&p, &traj).value;
    let swept = sweep_transmission(&p, &traj, 0.0, split) + sweep_transmission(&p, &traj, split, t_max);
    assert_relative_eq!(trans, swept, max_relative = 1e-11);
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 10..16 {
        let family = KernelFamily::ALL[seed as usize % 3];
        let traj = random_trajectory(8, family, 8.0, seed);
        let p = toy_params(family);
        let g = transmission_gradient(&p, &traj).unwrap();
        let f = |v: [f64; 3]| {
            let q = ModelParams {
                alpha: v[0],
                beta: v[1],
                kernel: KernelSpec::new(family, v[2]).unwrap(),
                ..p
            };
            full_loglik(&q, &traj).unwrap().value
        };
        let base = [p.alpha, p.beta, p.kernel.kappa];
        for k in 0..3 {
            let h = 1e-6 * base[k];
            let mut up = base;
            let mut down = base;
            up[k] += h;
            down[k] -= h;
            let fd = (f(up) - f(down)) / (2.0 * h);
            let scale = g[k].abs().max(1e-3);
            assert!((g[k] - fd).abs() / scale < 1e-4, "seed {seed} param {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn summaries_reproduce_direct_evaluation() {
    for seed in 20..26 {
        let family = KernelFamily::ALL[seed as usize % 3];
        let traj = random_trajectory(12, family, 6.0, seed);
        let trans = TransmissionSummary::new(&traj);
        let latent = SojournSummary::latent(&traj);
        let inf = SojournSummary::infectious(&traj);
        for scale in [0.5, 1.0, 2.0] {
            let p = toy_params(family);
            let p = ModelParams {
                alpha: p.alpha * scale,
                kernel: KernelSpec::new(family, p.kernel.kappa * scale).unwrap(),
                ..p
            };
            let direct = transmission_loglik(&p, &traj).value;
            assert_relative_eq!(trans.loglik(&p.kernel, p.alpha, p.beta).value, direct, max_relative = 1e-12);
            let ld = p.latent.distribution().unwrap();
            let id = p.infectious.distribution().unwrap();
            assert_relative_eq!(latent.loglik(&ld), latent_loglik(&ld, &traj), max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(inf.loglik(&id), infectious_loglik(&id, &traj), max_relative = 1e-12, epsilon = 1e-12);

            let z = extract_partial_data(&traj);
            let summary = PartialSummary::new(&z);
            assert_relative_eq!(
                summary.loglik(&p.kernel, p.alpha, p.beta).value,
                partial_loglik(&p.kernel, p.alpha, p.beta, &z).value,
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
    }
}

#[test]
fn partial_with_one_susceptible_is_zero() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 2.0]], 3.0).unwrap());
    let z = PartialData::new(
        pop,
        vec![
            PartialEvent {
                susceptible: vec![1],
                infectious: vec![0],
                exposed: 1,
            },
            PartialEvent {
                susceptible: vec![2],
                infectious: vec![0, 1],
                exposed: 2,
            },
        ],
    )
    .unwrap();
    let k = KernelSpec::new(KernelFamily::Gaussian, 0.3).unwrap();
    assert_eq!(partial_loglik(&k, 0.1, 2.0, &z).value, 0.0);
}

#[test]
fn partial_primary_only_is_uniform_choice() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [1.0, 0.0]], 3.0).unwrap());
    let z = PartialData::new(
        pop,
        vec![PartialEvent {
            susceptible: vec![0, 1],
            infectious: vec![],
            exposed: 0,
        }],
    )
    .unwrap();
    let k = KernelSpec::new(KernelFamily::Exponential, 0.3).unwrap();
    assert_relative_eq!(partial_loglik(&k, 0.1, 5.0, &z).value, 0.5f64.ln(), max_relative = 1e-15);
    let zero = partial_loglik(&k, 0.0, 5.0, &z);
    assert!(zero.is_impossible() && zero.value == f64::NEG_INFINITY);
}

#[test]
fn partial_rejects_malformed_events() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [1.0, 0.0]], 3.0).unwrap());
    let bad = PartialEvent {
        susceptible: vec![0],
        infectious: vec![1],
        exposed: 1,
    };
    assert!(PartialData::new(pop, vec![bad]).is_err());
}

#[test]
fn partial_factors_match_rate_over_pressure() {
    let traj = random_trajectory(10, KernelFamily::Exponential, 20.0, 41);
    let p = toy_params(KernelFamily::Exponential);
    let z = extract_partial_data(&traj);
    assert!(z.len() >= 3);
    let pop = traj.population();
    let mut total = 0.0;
    for e in z.events() {
        let one = PartialData::new(pop.clone(), vec![e.clone()]).unwrap();
        let factor = partial_loglik(&p.kernel, p.alpha, p.beta, &one).value.exp();
        let oracle = exposure_rate(&p, pop, e.exposed, &e.infectious).unwrap()
            / total_pressure(&p, pop, &e.susceptible, &e.infectious).unwrap();
        assert_relative_eq!(factor, oracle, max_relative = 1e-12);
        assert!(factor > 0.0 && factor <= 1.0);
        total += oracle.ln();
    }
    assert_relative_eq!(partial_loglik(&p.kernel, p.alpha, p.beta, &z).value, total, max_relative = 1e-12);
}

#[test]
fn partial_without_transmission_is_inverse_susceptible_count() {
    let traj = random_trajectory(9, KernelFamily::PowerLaw, 15.0, 8);
    let z = extract_partial_data(&traj);
    let k = KernelSpec::new(KernelFamily::PowerLaw, 1.3).unwrap();
    for e in z.events() {
        let one = PartialData::new(traj.population().clone(), vec![e.clone()]).unwrap();
        let expected = -(e.susceptible.len() as f64).ln();
        assert_relative_eq!(partial_loglik(&k, 0.3, 0.0, &one).value, expected, max_relative = 1e-14);
    }
}

#[test]
fn no_exposures_gives_empty_partial_data() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [1.0, 0.0]], 3.0).unwrap());
    let traj = Trajectory::new(pop, vec![HostEvents::NEVER; 2], 4.0).unwrap();
    assert!(extract_partial_data(&traj).is_empty());
}

#[test]
fn first_exposure_sees_everyone_susceptible() {
    let traj = random_trajectory(6, KernelFamily::Gaussian, 30.0, 2);
    let z = extract_partial_data(&traj);
    let first = &z.events()[0];
    // host 0 is the seed: everyone else susceptible, the seed infectious
    assert_eq!(first.susceptible, (1..6).collect::<Vec<_>>());
    assert_eq!(first.infectious, vec![0]);
}

/// Replays the event log as a state machine and records the sets at each exposure.
fn forward_sweep(traj: &Trajectory) -> Vec<PartialEvent> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        S,
        E,
        I,
        R,
    }
    // (time, kind rank, host): removals and infections at time t apply after an
    // exposure at t only through the strict/weak inequalities below
    let mut log = Vec::new();
    let mut state = vec![State::S; traj.len()];
    for (h, ev) in traj.hosts().iter().enumerate() {
        if ev.is_seed() {
            state[h] = State::I;
            if let Some(r) = ev.removal {
                log.push((r, 0u8, h));
            }
            continue;
        }
        if let Some(e) = ev.exposure {
            log.push((e, 1, h));
        }
        if let Some(i) = ev.infection {
            log.push((i, 2, h));
        }
        if let Some(r) = ev.removal {
            log.push((r, 3, h));
        }
    }
    // at equal times: exposures first (in host order), then infections, then removals
    let rank = |k: u8| match k {
        1 => 0,
        2 => 1,
        _ => 2,
    };
    log.sort_by(|a, b| a.0.total_cmp(&b.0).then(rank(a.1).cmp(&rank(b.1))).then(a.2.cmp(&b.2)));
    let mut out = Vec::new();
    for (_, kind, h) in log {
        match kind {
            1 => {
                out.push(PartialEvent {
                    susceptible: (0..traj.len()).filter(|&x| state[x] == State::S).collect(),
                    infectious: (0..traj.len()).filter(|&x| state[x] == State::I).collect(),
                    exposed: h,
                });
                state[h] = State::E;
            }
            2 => state[h] = State::I,
            _ => state[h] = State::R,
        }
    }
    out
}

#[test]
fn extraction_agrees_with_forward_sweep() {
    for seed in 0..10 {
        let traj = random_trajectory(15, KernelFamily::ALL[seed as usize % 3], 25.0, 100 + seed);
        assert_eq!(extract_partial_data(&traj).events(), forward_sweep(&traj).as_slice());
    }
}

#[test]
fn simultaneous_exposures_follow_host_order() {
    let pop = Arc::new(HostPopulation::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 3.0).unwrap());
    let hosts = vec![ev(Some(0.0), Some(0.0), None), ev(Some(1.0), None, None), ev(Some(1.0), None, None)];
    let traj = Trajectory::new(pop, hosts, 2.0).unwrap();
    let z = extract_partial_data(&traj);
    assert_eq!(z.events()[0].exposed, 1);
    assert_eq!(z.events()[0].susceptible, vec![1, 2]);
    assert_eq!(z.events()[1].susceptible, vec![2]);
    assert_eq!(z.events(), forward_sweep(&traj).as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loglik_invariant_under_relabelling(seed in 0u64..10_000, n in 3usize..9) {
        let family = KernelFamily::ALL[(seed % 3) as usize];
        let traj = random_trajectory(n, family, 7.0, seed);
        let mut perm: Vec<HostId> = (0..n).collect();
        perm.shuffle(&mut rng_from_seed(seed ^ 0xabc));
        let p = toy_params(family);
        let a = full_loglik(&p, &traj).unwrap().value;
        let b = full_loglik(&p, &traj.permuted(&perm).unwrap()).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn partial_loglik_is_nonpositive(seed in 0u64..10_000, alpha in 1e-4f64..2.0, beta in 0.0f64..5.0, kappa in 0.05f64..3.0) {
        let family = KernelFamily::ALL[(seed % 3) as usize];
        let traj = random_trajectory(10, family, 12.0, seed);
        let z = extract_partial_data(&traj);
        let k = KernelSpec::new(family, kappa).unwrap();
        let direct = partial_loglik(&k, alpha, beta, &z).value;
        prop_assert!(direct <= 1e-12);
        prop_assert!(PartialSummary::new(&z).loglik(&k, alpha, beta).value <= 0.0);
    }
}
