//! Rényi-DP accounting for the Gaussian and Poisson-subsampled Gaussian
//! mechanisms, composition, conversion to (ε, δ) and noise calibration.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math;

/// Lower end of the noise-multiplier search bracket.
pub const Z_MIN: f64 = 1e-3;
/// Upper end of the noise-multiplier search bracket.
pub const Z_MAX: f64 = 1e6;
/// Relative width at which the bisection stops.
pub const CALIBRATION_RTOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(domain("epsilon must be finite and > 0"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain("delta must lie in (0, 1)"));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    /// `δ = 1/n²`.
    pub fn with_default_delta(epsilon: f64, n: usize) -> Result<Self> {
        let n = n as f64;
        Self::new(epsilon, 1.0 / (n * n))
    }
}

/// RDP guarantee `ε(α)` over a grid of orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(domain("RDP curve needs at least one order"));
        }
        if orders.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: orders.len(),
                found: values.len(),
            });
        }
        if orders.iter().any(|&a| !(a > 1.0)) {
            return Err(domain("RDP orders must exceed 1"));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("RDP orders must be strictly ascending"));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(domain("RDP values must be >= 0"));
        }
        Ok(RdpCurve { orders, values })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Noise multiplier, sampling ratio and number of compositions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub noise_multiplier: f64,
    pub sampling_ratio: f64,
    pub steps: usize,
}

impl MechanismSpec {
    pub fn new(noise_multiplier: f64, sampling_ratio: f64, steps: usize) -> Result<Self> {
        if !(noise_multiplier > 0.0) {
            return Err(domain("noise multiplier must be > 0"));
        }
        if !(sampling_ratio > 0.0 && sampling_ratio <= 1.0) {
            return Err(domain("sampling ratio must lie in (0, 1]"));
        }
        if steps == 0 {
            return Err(domain("steps must be >= 1"));
        }
        Ok(MechanismSpec {
            noise_multiplier,
            sampling_ratio,
            steps,
        })
    }

    /// ε spent after all steps at failure probability `delta`.
    pub fn epsilon(&self, delta: f64, orders: &[f64]) -> Result<f64> {
        let per_step = rdp_curve(self.sampling_ratio, self.noise_multiplier, orders)?;
        to_epsilon(&compose(&per_step, self.steps), delta)
    }
}

/// `{2, 3, …, 64} ∪ {128, 256}`.
pub fn default_orders() -> Vec<f64> {
    (2..=64).chain([128, 256]).map(f64::from).collect()
}

/// RDP of the Gaussian mechanism with noise multiplier `z`: `α / (2z²)`.
pub fn rdp_gaussian(alpha: f64, z: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(domain("RDP order must exceed 1"));
    }
    if !(z > 0.0) {
        return Err(domain("noise multiplier must be > 0"));
    }
    Ok(alpha / (2.0 * z * z))
}

/// Integer-order RDP upper bound for the Poisson-subsampled Gaussian:
/// `1/(α-1) · log Σ_k C(α,k) (1-q)^{α-k} q^k exp(k(k-1)/(2z²))`,
/// accumulated in log space.
pub fn rdp_subsampled_gaussian(alpha: u32, q: f64, z: f64) -> Result<f64> {
    if alpha < 2 {
        return Err(domain("subsampled RDP needs an integer order >= 2"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(domain("sampling ratio must lie in (0, 1]"));
    }
    if !(z > 0.0) {
        return Err(domain("noise multiplier must be > 0"));
    }
    if q == 1.0 {
        return rdp_gaussian(f64::from(alpha), z);
    }
    let a = f64::from(alpha);
    let log_q = math::log(q);
    let log_1mq = math::log1p(-q);
    let inv_two_z2 = 1.0 / (2.0 * z * z);
    let mut log_binom = 0.0;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        let kf = f64::from(k);
        if k > 0 {
            log_binom += math::log(a - kf + 1.0) - math::log(kf);
        }
        terms.push(log_binom + (a - kf) * log_1mq + kf * log_q + kf * (kf - 1.0) * inv_two_z2);
    }
    let value = math::log_sum_exp(&terms) / (a - 1.0);
    if !value.is_finite() {
        return Err(Error::Overflow(alloc::format!(
            "subsampled RDP at alpha={alpha}, q={q}, z={z}"
        )));
    }
    // The sum is E[exp(k(k-1)/2z²)] ≥ 1; clamp rounding below zero.
    Ok(value.max(0.0))
}

/// Per-step RDP curve at sampling ratio `q` (Gaussian when `q == 1`).
/// Fractional orders are only meaningful without subsampling.
pub fn rdp_curve(q: f64, z: f64, orders: &[f64]) -> Result<RdpCurve> {
    let values = orders
        .iter()
        .map(|&a| {
            if q == 1.0 {
                rdp_gaussian(a, z)
            } else if libm::trunc(a) == a && a >= 2.0 && a <= f64::from(u32::MAX) {
                rdp_subsampled_gaussian(a as u32, q, z)
            } else {
                Err(domain("subsampled accounting needs integer orders >= 2"))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    RdpCurve::new(orders.to_vec(), values)
}

/// `T`-fold composition: values scale by `T`.
pub fn compose(curve: &RdpCurve, steps: usize) -> RdpCurve {
    let t = steps as f64;
    RdpCurve {
        orders: curve.orders.clone(),
        values: curve.values.iter().map(|v| v * t).collect(),
    }
}

/// `min_α ε(α) + log(1/δ)/(α-1)`.
pub fn to_epsilon(curve: &RdpCurve, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain("delta must lie in (0, 1)"));
    }
    if curve.orders.is_empty() {
        return Err(domain("empty RDP curve"));
    }
    let log_inv_delta = -math::log(delta);
    Ok(curve
        .orders
        .iter()
        .zip(&curve.values)
        .map(|(a, v)| v + log_inv_delta / (a - 1.0))
        .fold(f64::INFINITY, f64::min))
}

/// Smallest noise multiplier (to relative width `CALIBRATION_RTOL`) whose
/// `T`-step composition at ratio `q` fits the budget. The returned `z` meets
/// the budget and `z·(1 − 1e-3)` does not.
pub fn calibrate_noise(budget: PrivacyBudget, q: f64, steps: usize, orders: &[f64]) -> Result<f64> {
    PrivacyBudget::new(budget.epsilon, budget.delta)?;
    MechanismSpec::new(1.0, q, steps)?;
    let eps_at = |z: f64| MechanismSpec::new(z, q, steps)?.epsilon(budget.delta, orders);
    let infeasible = Error::Infeasible {
        epsilon: budget.epsilon,
        delta: budget.delta,
    };
    if eps_at(Z_MAX)? > budget.epsilon {
        return Err(infeasible);
    }
    if eps_at(Z_MIN)? <= budget.epsilon {
        return Err(domain("budget already met at the bottom of the noise bracket"));
    }
    let (mut lo, mut hi) = (Z_MIN, Z_MAX);
    while hi / lo > 1.0 + CALIBRATION_RTOL {
        let mid = math::sqrt(lo * hi);
        if eps_at(mid)? <= budget.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Per-step Gaussian std for DP-GD: `z · 2C/n`, where `2C/n` is the L2
/// sensitivity of the mean clipped gradient under replacement of one record.
pub fn sigma_for_gd(clip: f64, n: usize, z: f64) -> f64 {
    z * 2.0 * clip / n as f64
}
