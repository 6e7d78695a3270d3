//! Float helpers. `core` has no transcendental functions, so they come from libm.

pub(crate) use libm::{exp, log, log1p, sqrt};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    sqrt(norm_sq(a))
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `1 / (1 + e^{-x})` without overflow for large |x|.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `(σ(x), log(1 + e^x))` sharing one exponential.
pub(crate) fn sigmoid_softplus(x: f64) -> (f64, f64) {
    let e = exp(-x.abs());
    let s = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (s, x.max(0.0) + log1p(e))
}

/// `log Σ e^{x_i}`; `-inf` for an empty or all `-inf` input.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = xs.iter().map(|x| exp(x - max)).sum();
    max + log(s)
}
