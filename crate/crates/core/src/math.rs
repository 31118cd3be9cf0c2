//! Small numeric helpers shared by the probability and inference layers.

use std::sync::OnceLock;

/// Largest universe the crate supports; subsets are `u64` bitmasks.
pub const MAX_UNIVERSE: usize = 64;

fn pascal() -> &'static [[u64; MAX_UNIVERSE + 1]; MAX_UNIVERSE + 1] {
    static TABLE: OnceLock<Box<[[u64; MAX_UNIVERSE + 1]; MAX_UNIVERSE + 1]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([[0u64; MAX_UNIVERSE + 1]; MAX_UNIVERSE + 1]);
        for n in 0..=MAX_UNIVERSE {
            t[n][0] = 1;
            for k in 1..=n {
                t[n][k] = t[n - 1][k - 1].saturating_add(if k < n { t[n - 1][k] } else { 0 });
            }
        }
        t
    })
}

/// Exact binomial coefficient for `n <= 64`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    assert!(n <= MAX_UNIVERSE, "binomial table covers n <= {MAX_UNIVERSE}");
    pascal()[n][k]
}

/// `binomial(n, k)` as a float, exact for every value the table holds.
pub fn binomial_f64(n: usize, k: usize) -> f64 {
    binomial(n, k) as f64
}

/// Natural log of `binomial(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        (binomial(n, k) as f64).ln()
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// Normalizes log-weights in place into probabilities; returns the log normalizer.
pub fn normalize_log_weights(weights: &mut [f64]) -> f64 {
    let lse = log_sum_exp(weights);
    for w in weights.iter_mut() {
        *w = if lse.is_finite() { (*w - lse).exp() } else { 0.0 };
    }
    lse
}

pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
