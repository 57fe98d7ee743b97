//! Anderson–Darling test of a sample against the fully specified U(0,1) null.
//!
//! The p-value uses Marsaglia & Marsaglia's approximation: the asymptotic null cdf
//! of A² plus a finite-sample correction in `n`.

use crate::error::{Error, Result};

const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonDarling {
    pub statistic: f64,
    pub p_value: f64,
}

/// A² of `u` against U(0,1). Values are clamped into `[1e-12, 1 - 1e-12]`.
pub fn ad_statistic(u: &[f64]) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::domain("Anderson–Darling needs at least one value"));
    }
    if u.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("Anderson–Darling input contains NaN"));
    }
    let mut sorted: Vec<f64> = u.iter().map(|v| v.clamp(CLAMP, 1.0 - CLAMP)).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut s = 0.0;
    for i in 0..n {
        let w = (2 * i + 1) as f64;
        s += w * (sorted[i].ln() + (1.0 - sorted[n - 1 - i]).ln());
    }
    Ok(-(n as f64) - s / n as f64)
}

/// Limiting null cdf of A².
pub fn ad_limit_cdf(z: f64) -> f64 {
    if !(z > 0.0) {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012
                + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp())
            .exp()
    }
}

/// Finite-sample correction to the limiting cdf value `x` for sample size `n`.
fn finite_sample_correction(n: usize, x: f64) -> f64 {
    let n = n as f64;
    if x > 0.8 {
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x)
            / n;
    }
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n;
    }
    let t = (x - c) / (0.8 - c);
    let t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
    t * (0.04213 / n + 0.01365 / (n * n))
}

/// Null cdf of A² for a sample of size `n`.
pub fn ad_cdf(n: usize, z: f64) -> f64 {
    let x = ad_limit_cdf(z);
    (x + finite_sample_correction(n, x)).clamp(0.0, 1.0)
}

/// A² and its upper-tail p-value.
pub fn anderson_darling(u: &[f64]) -> Result<AndersonDarling> {
    let statistic = ad_statistic(u)?;
    Ok(AndersonDarling {
        statistic,
        p_value: 1.0 - ad_cdf(u.len(), statistic),
    })
}
