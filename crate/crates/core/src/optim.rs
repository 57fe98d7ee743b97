//! Derivative-free maximisation by the Nelder–Mead simplex method.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop when every vertex lies within this distance (max-norm) of the best one.
    pub simplex_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            simplex_tol: 1e-8,
            max_evals: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Maximise `f` from `x0` with initial simplex edges `step`.
///
/// Non-finite objective values are treated as `-inf`, so the simplex backs away
/// from them.
pub fn maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    opts: &NelderMeadOptions,
) -> Optimum {
    let n = x0.len();
    assert_eq!(step.len(), n, "one step per coordinate");
    let evals = std::cell::Cell::new(0usize);
    // minimise the negated objective
    let mut cost = |x: &[f64]| -> f64 {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for k in 0..n {
        let mut v = x0.to_vec();
        v[k] += step[k];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| cost(v)).collect();
    let mut converged = false;

    while evals.get() < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size <= opts.simplex_tol {
            converged = values[0].is_finite();
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = cost(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = cost(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        // outside contraction when the reflection improved on the worst vertex
        let contracted = along(if fr < values[n] { -0.5 } else { 0.5 });
        let fc = cost(&contracted);
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(v, b)| b + 0.5 * (v - b))
                .collect();
            values[i] = cost(&shrunk);
            simplex[i] = shrunk;
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Optimum {
        x: simplex[best].clone(),
        value: -values[best],
        converged,
        evaluations: evals.get(),
    }
}

/// One run from `x0`, then `restarts` further runs from the best point so far with
/// each coordinate jittered by `jitter * N(0, 1)`. Returns the best point found and
/// the total evaluation count; `converged` reports the run that produced it.
pub fn maximize_with_restarts<F: FnMut(&[f64]) -> f64, R: Rng + ?Sized>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    restarts: usize,
    jitter: f64,
    opts: &NelderMeadOptions,
    rng: &mut R,
) -> Optimum {
    let mut best = maximize(&mut f, x0, step, opts);
    let mut total = best.evaluations;
    for _ in 0..restarts {
        let start: Vec<f64> = best
            .x
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                v + jitter * z
            })
            .collect();
        let run = maximize(&mut f, &start, step, opts);
        total += run.evaluations;
        if run.value > best.value || !best.value.is_finite() && run.value.is_finite() {
            best = run;
        }
    }
    best.evaluations = total;
    best
}
