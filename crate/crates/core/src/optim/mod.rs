//! Gradient-perturbed optimizers (DP-GD, DP-SGD), learning-rate schedules,
//! the non-private reference solver and output-perturbation baselines.
//!
//! Every run starts from `x₁ = 0` and draws all randomness from a ChaCha
//! stream seeded by the config, so a (config, seed) pair fixes the trace
//! bit for bit.

mod output;
mod reference;

pub use output::{
    nonprivate_clipped_gd, one_pass_sgd, output_gd_sensitivity, output_perturbation_gd,
    output_perturbation_sgd, output_sgd_sensitivity, pass_order, OutputGdConfig, OutputPerturbation,
    OutputSgdConfig,
};
pub use reference::{nonprivate_optimum, ReferenceSolution, DEFAULT_TOL, MAX_ITERATIONS};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math;
use crate::models::{Objective, ParameterVector};
use crate::seed;

/// Learning-rate schedule `η_t`, `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { rate: f64 },
    /// `1 / (ν t)`.
    InverseNuT { nu: f64 },
    /// `D / (G √t)`.
    InverseSqrt { radius: f64, bound: f64 },
    /// `rate` for `t ≤ ⌊T/2⌋`, `rate / 2` afterwards.
    HalveAtMidpoint { rate: f64, total_steps: usize },
}

impl Schedule {
    pub fn rate(&self, t: usize) -> f64 {
        let t = t.max(1);
        match *self {
            Schedule::Constant { rate } => rate,
            Schedule::InverseNuT { nu } => 1.0 / (nu * t as f64),
            Schedule::InverseSqrt { radius, bound } => radius / (bound * math::sqrt(t as f64)),
            Schedule::HalveAtMidpoint { rate, total_steps } => {
                if t <= total_steps / 2 {
                    rate
                } else {
                    rate / 2.0
                }
            }
        }
    }

    /// Radius `D` and `G = L √(1 + p σ²)` for the convex DP-SGD rate.
    pub fn inverse_sqrt_for(radius: f64, lipschitz: f64, dim: usize, noise_multiplier: f64) -> Self {
        let bound = lipschitz * math::sqrt(1.0 + dim as f64 * noise_multiplier * noise_multiplier);
        Schedule::InverseSqrt { radius, bound }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Constant { rate } | Schedule::HalveAtMidpoint { rate, .. } => rate > 0.0 && rate.is_finite(),
            Schedule::InverseNuT { nu } => nu > 0.0 && nu.is_finite(),
            Schedule::InverseSqrt { radius, bound } => {
                radius > 0.0 && bound > 0.0 && radius.is_finite() && bound.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain("schedule parameters must be positive and finite"))
        }
    }
}

/// DP-GD configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub steps: usize,
    pub schedule: Schedule,
    pub clip: f64,
    /// Per-step Gaussian std σ_t; zero gives the non-private ablation.
    pub sigma: f64,
    pub average_iterates: bool,
    pub seed: u64,
    /// Keep `x_t` for `t = 1, 1 + stride, …` and the final iterate.
    pub snapshot_stride: Option<usize>,
}

impl GdConfig {
    pub fn new(steps: usize, schedule: Schedule, clip: f64, sigma: f64, seed: u64) -> Self {
        GdConfig {
            steps,
            schedule,
            clip,
            sigma,
            average_iterates: false,
            seed,
            snapshot_stride: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(domain("steps must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(domain("sigma must be finite and >= 0"));
        }
        if !(self.clip > 0.0) {
            return Err(domain("clip must be > 0"));
        }
        self.schedule.validate()
    }
}

/// How DP-SGD forms each step's gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    /// One uniformly drawn example per step.
    Single,
    /// Each example joins the lot independently with probability `q`.
    Poisson { q: f64 },
    /// A uniformly drawn lot of `round(q n)` distinct examples.
    FixedRatio { q: f64 },
}

/// DP-SGD configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub steps: usize,
    pub schedule: Schedule,
    pub clip: f64,
    pub noise_multiplier: f64,
    pub sampling: Sampling,
    pub projection_radius: Option<f64>,
    pub seed: u64,
    pub snapshot_stride: Option<usize>,
}

impl SgdConfig {
    pub fn new(steps: usize, schedule: Schedule, clip: f64, noise_multiplier: f64, sampling: Sampling, seed: u64) -> Self {
        SgdConfig {
            steps,
            schedule,
            clip,
            noise_multiplier,
            sampling,
            projection_radius: None,
            seed,
            snapshot_stride: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(domain("steps must be >= 1"));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(domain("noise multiplier must be finite and >= 0"));
        }
        if !(self.clip > 0.0) {
            return Err(domain("clip must be > 0"));
        }
        match self.sampling {
            Sampling::Poisson { q } | Sampling::FixedRatio { q } if !(q > 0.0 && q <= 1.0) => {
                return Err(domain("sampling ratio must lie in (0, 1]"));
            }
            _ => {}
        }
        if self.projection_radius.is_some_and(|d| !(d > 0.0)) {
            return Err(domain("projection radius must be > 0"));
        }
        self.schedule.validate()
    }
}

/// One optimizer step, recorded before the update is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// `F(x_t)`.
    pub objective: f64,
    /// Norm of the noise-free (clipped) gradient used at step `t`.
    pub grad_norm: f64,
    pub rate: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub final_params: ParameterVector,
    pub averaged_params: Option<ParameterVector>,
    /// `(t, x_t)` pairs; see `snapshot_stride`.
    pub snapshots: Vec<(usize, ParameterVector)>,
}

impl RunTrace {
    /// The parameters a run reports: averaged if enabled, else the last iterate.
    pub fn output(&self) -> &ParameterVector {
        self.averaged_params.as_ref().unwrap_or(&self.final_params)
    }
}

fn wants_snapshot(stride: Option<usize>, t: usize) -> bool {
    stride.is_some_and(|s| (t - 1) % s.max(1) == 0)
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if math::all_finite(x) {
        Ok(())
    } else {
        Err(Error::Diverged {
            step,
            norm: math::norm(x),
        })
    }
}

/// DP-GD: `x_{t+1} = x_t − η_t (g_t + z_t)` with `g_t` the clipped mean
/// gradient plus `λ x_t` and `z_t ~ N(0, σ_t² I)`. Returns `x_{T+1}`, or
/// `(1/T) Σ_{t=1}^T x_{t+1}` with `average_iterates`.
pub fn dp_gd<O: Objective + ?Sized>(obj: &O, cfg: &GdConfig) -> Result<(ParameterVector, RunTrace)> {
    cfg.validate()?;
    let dim = obj.dim();
    let mut rng = seed::rng(cfg.seed);
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let mut avg = cfg.average_iterates.then(|| vec![0.0; dim]);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut snapshots = Vec::new();

    for t in 1..=cfg.steps {
        if wants_snapshot(cfg.snapshot_stride, t) {
            snapshots.push((t, ParameterVector::from(x.clone())));
        }
        let objective = obj.gradient(&x, Some(cfg.clip), &mut g);
        let rate = cfg.schedule.rate(t);
        records.push(StepRecord {
            t,
            objective,
            grad_norm: math::norm(&g),
            rate,
            accuracy: None,
        });
        if cfg.sigma > 0.0 {
            seed::fill_gaussian(&mut rng, cfg.sigma, &mut noise);
        }
        for ((xi, gi), zi) in x.iter_mut().zip(&g).zip(&noise) {
            *xi -= rate * (gi + zi);
        }
        check_finite(&x, t)?;
        if let Some(a) = avg.as_mut() {
            a.iter_mut().zip(&x).for_each(|(ai, xi)| *ai += xi);
        }
    }
    if cfg.snapshot_stride.is_some() {
        snapshots.push((cfg.steps + 1, ParameterVector::from(x.clone())));
    }
    let averaged = avg.map(|mut a| {
        let t = cfg.steps as f64;
        a.iter_mut().for_each(|v| *v /= t);
        ParameterVector::from(a)
    });
    let trace = RunTrace {
        seed: cfg.seed,
        records,
        final_params: ParameterVector::from(x),
        averaged_params: averaged,
        snapshots,
    };
    Ok((trace.output().clone(), trace))
}

/// Draws the lot for one step into `lot` (sorted ascending).
fn draw_lot(rng: &mut seed::Rng, sampling: Sampling, n: usize, lot: &mut Vec<usize>) {
    lot.clear();
    match sampling {
        Sampling::Single => lot.push(rng.random_range(0..n)),
        Sampling::Poisson { q } => {
            if q >= 1.0 {
                lot.extend(0..n);
            } else {
                lot.extend((0..n).filter(|_| rng.random::<f64>() < q));
            }
        }
        Sampling::FixedRatio { q } => {
            let m = (libm::round(q * n as f64) as usize).clamp(1, n);
            if m == n {
                lot.extend(0..n);
            } else {
                lot.extend(rand::seq::index::sample(rng, n, m).iter());
                lot.sort_unstable();
            }
        }
    }
}

/// DP-SGD.
///
/// * `Single`: `g_t = clip(∇f_i(x_t)) + λ x_t + N(0, (zC)² I)`.
/// * `Poisson`/`FixedRatio`: `g_t = (Σ_lot clip(∇f_i) + N(0, (zC)² I)) / (q n) + λ x_t`.
///
/// Then `x_{t+1} = x_t − η_t g_t`, projected onto the ball of radius `D`
/// when `projection_radius` is set. An empty Poisson lot is a noise-only step.
pub fn dp_sgd<O: Objective + ?Sized>(obj: &O, cfg: &SgdConfig) -> Result<(ParameterVector, RunTrace)> {
    cfg.validate()?;
    let dim = obj.dim();
    let n = obj.num_examples();
    let lambda = obj.l2();
    let noise_std = cfg.noise_multiplier * cfg.clip;
    let mut rng = seed::rng(cfg.seed);
    let mut x = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let mut lot = Vec::new();
    let mut records = Vec::with_capacity(cfg.steps);
    let mut snapshots = Vec::new();

    for t in 1..=cfg.steps {
        if wants_snapshot(cfg.snapshot_stride, t) {
            snapshots.push((t, ParameterVector::from(x.clone())));
        }
        let objective = obj.value(&x);
        let rate = cfg.schedule.rate(t);
        draw_lot(&mut rng, cfg.sampling, n, &mut lot);
        sum.iter_mut().for_each(|v| *v = 0.0);
        obj.accumulate(Some(&lot), &x, Some(cfg.clip), &mut sum);
        if noise_std > 0.0 {
            seed::fill_gaussian(&mut rng, noise_std, &mut noise);
        }
        let scale = match cfg.sampling {
            Sampling::Single => 1.0,
            Sampling::Poisson { q } | Sampling::FixedRatio { q } => q * n as f64,
        };
        let mut grad_sq = 0.0;
        for ((xi, si), zi) in x.iter_mut().zip(&sum).zip(&noise) {
            let clean = si / scale + lambda * *xi;
            grad_sq += clean * clean;
            let gi = match cfg.sampling {
                Sampling::Single => clean + zi,
                _ => (si + zi) / scale + lambda * *xi,
            };
            *xi -= rate * gi;
        }
        records.push(StepRecord {
            t,
            objective,
            grad_norm: math::sqrt(grad_sq),
            rate,
            accuracy: None,
        });
        if let Some(radius) = cfg.projection_radius {
            let nrm = math::norm(&x);
            if nrm > radius {
                let f = radius / nrm;
                x.iter_mut().for_each(|v| *v *= f);
            }
        }
        check_finite(&x, t)?;
    }
    if cfg.snapshot_stride.is_some() {
        snapshots.push((cfg.steps + 1, ParameterVector::from(x.clone())));
    }
    let trace = RunTrace {
        seed: cfg.seed,
        records,
        final_params: ParameterVector::from(x),
        averaged_params: None,
        snapshots,
    };
    Ok((trace.final_params.clone(), trace))
}

#[cfg(test)]
mod tests;
