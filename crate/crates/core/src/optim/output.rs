//! Output-perturbation baselines: train without noise, then add Gaussian
//! noise scaled to the end-to-end sensitivity of the final parameters.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{domain, Error, Result};
use crate::math;
use crate::models::{Objective, ParameterVector};
use crate::privacy::{calibrate_noise, PrivacyBudget};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputGdConfig {
    pub steps: usize,
    pub rate: f64,
    pub clip: f64,
    /// Smoothness bound β̂ of the objective; `rate` must not exceed `1/β̂`.
    pub smoothness: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSgdConfig {
    pub rate: f64,
    pub clip: f64,
    pub smoothness: f64,
    pub seed: u64,
}

/// A released model together with how its noise was sized.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPerturbation {
    pub params: ParameterVector,
    pub noiseless: ParameterVector,
    pub sensitivity: f64,
    pub noise_multiplier: f64,
    pub sigma: f64,
}

/// `Δ = (2ηC/n) Σ_{t=0}^{T-1} (1 − ηλ)^t`: per-step divergence `2ηC/n`
/// shrunk by the contraction factor of the λ-strongly convex update.
pub fn output_gd_sensitivity(rate: f64, lambda: f64, clip: f64, n: usize, steps: usize) -> f64 {
    let contraction = 1.0 - rate * lambda;
    let mut sum = 0.0;
    let mut term = 1.0;
    for _ in 0..steps {
        sum += term;
        term *= contraction;
    }
    2.0 * rate * clip / n as f64 * sum
}

/// `Δ = 2ηC` for one permuted pass at constant rate.
pub fn output_sgd_sensitivity(rate: f64, clip: f64) -> f64 {
    2.0 * rate * clip
}

/// Noise-free, clipped full-batch GD from `x₁ = 0`.
pub fn nonprivate_clipped_gd<O: Objective + ?Sized>(obj: &O, steps: usize, rate: f64, clip: f64) -> Vec<f64> {
    let dim = obj.dim();
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for _ in 0..steps {
        obj.gradient(&x, Some(clip), &mut g);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= rate * gi);
    }
    x
}

/// The seeded permutation used by [`one_pass_sgd`].
pub fn pass_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    order
}

/// One pass over `pass_order(n, seed)`: `x ← x − η (clip(∇f_i(x)) + λx)`.
pub fn one_pass_sgd<O: Objective + ?Sized>(obj: &O, rate: f64, clip: f64, seed: u64) -> Vec<f64> {
    let dim = obj.dim();
    let lambda = obj.l2();
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for i in pass_order(obj.num_examples(), seed) {
        g.iter_mut().for_each(|v| *v = 0.0);
        obj.accumulate(Some(&[i]), &x, Some(clip), &mut g);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= rate * (gi + lambda * *xi));
    }
    x
}

fn release(noiseless: Vec<f64>, sensitivity: f64, budget: PrivacyBudget, orders: &[f64], seed: u64) -> Result<OutputPerturbation> {
    let z = calibrate_noise(budget, 1.0, 1, orders)?;
    let sigma = z * sensitivity;
    let mut noise = vec![0.0; noiseless.len()];
    // Decorrelated from any stream the training phase used.
    seed::fill_gaussian(&mut seed::rng(seed::derive(seed, &[0x6f75_7470])), sigma, &mut noise);
    let params: Vec<f64> = noiseless.iter().zip(&noise).map(|(x, z)| x + z).collect();
    if !math::all_finite(&params) {
        return Err(Error::Diverged {
            step: 0,
            norm: math::norm(&params),
        });
    }
    Ok(OutputPerturbation {
        params: params.into(),
        noiseless: noiseless.into(),
        sensitivity,
        noise_multiplier: z,
        sigma,
    })
}

fn check_rate(rate: f64, smoothness: f64) -> Result<()> {
    if !(rate > 0.0) {
        return Err(domain("learning rate must be > 0"));
    }
    if rate * smoothness > 1.0 + 1e-12 {
        return Err(domain("output perturbation needs rate <= 1/smoothness"));
    }
    Ok(())
}

/// Output-perturbed full-batch GD.
pub fn output_perturbation_gd<O: Objective + ?Sized>(
    obj: &O,
    cfg: &OutputGdConfig,
    budget: PrivacyBudget,
    orders: &[f64],
) -> Result<OutputPerturbation> {
    let lambda = obj.l2();
    if !(lambda > 0.0) {
        return Err(Error::Unsupported(
            "output-perturbed GD without L2 regularization (no contraction)".into(),
        ));
    }
    if cfg.steps == 0 {
        return Err(domain("steps must be >= 1"));
    }
    check_rate(cfg.rate, cfg.smoothness)?;
    let x = nonprivate_clipped_gd(obj, cfg.steps, cfg.rate, cfg.clip);
    let delta = output_gd_sensitivity(cfg.rate, lambda, cfg.clip, obj.num_examples(), cfg.steps);
    release(x, delta, budget, orders, cfg.seed)
}

/// Output-perturbed one-pass SGD.
pub fn output_perturbation_sgd<O: Objective + ?Sized>(
    obj: &O,
    cfg: &OutputSgdConfig,
    budget: PrivacyBudget,
    orders: &[f64],
) -> Result<OutputPerturbation> {
    check_rate(cfg.rate, cfg.smoothness)?;
    let x = one_pass_sgd(obj, cfg.rate, cfg.clip, cfg.seed);
    release(x, output_sgd_sensitivity(cfg.rate, cfg.clip), budget, orders, cfg.seed)
}
