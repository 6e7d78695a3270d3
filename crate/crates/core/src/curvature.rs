//! Curvature probes: average curvature `tr(H)/p`, minimum curvature
//! `λ_min(H)` and the Monte-Carlo expected curvature `ν̂` along a path.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, domain, Error, Result};
use crate::math;
use crate::models::{hessian, Glm, HessianMatrix, LossKind, LossSpec, Objective, ParameterVector};
use crate::seed;

/// Smallest Monte-Carlo sample size accepted by [`estimate_nu`].
pub const MIN_DRAWS: usize = 100;
pub const DEFAULT_STRIDE: usize = 5;

pub fn average_curvature(h: &HessianMatrix) -> f64 {
    h.trace() / h.dim() as f64
}

/// `λ_min(H)`. `floor` seeds the inverse iteration used above the Jacobi
/// size limit; pass the regularizer when known.
pub fn min_curvature(h: &HessianMatrix, floor: f64) -> Result<f64> {
    h.min_eigenvalue(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    pub nu_hat: f64,
    pub standard_error: f64,
}

/// `ν̂ = mean⟨∇F(x̃), x̃ − x*⟩ / mean‖x̃ − x*‖²` over `x̃_j = x − z_j`,
/// `z_j ~ N(0, σ² I)`, with a delta-method standard error for the ratio.
pub fn estimate_nu<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    x_star: &[f64],
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<NuEstimate> {
    let p = obj.dim();
    check_len(p, x.len())?;
    check_len(p, x_star.len())?;
    if draws < MIN_DRAWS {
        return Err(domain("estimate_nu needs at least 100 draws"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(domain("estimate_nu needs sigma > 0"));
    }
    let mut rng = seed::rng(seed);
    let mut z = vec![0.0; p];
    let mut xt = vec![0.0; p];
    let mut g = vec![0.0; p];
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        seed::fill_gaussian(&mut rng, sigma, &mut z);
        for ((t, xi), zi) in xt.iter_mut().zip(x).zip(&z) {
            *t = xi - zi;
        }
        obj.gradient(&xt, None, &mut g);
        let (mut a, mut b) = (0.0, 0.0);
        for ((gi, ti), si) in g.iter().zip(&xt).zip(x_star) {
            let d = ti - si;
            a += gi * d;
            b += d * d;
        }
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let m = draws as f64;
    let (ma, mb) = (sa / m, sb / m);
    if !(mb > 0.0) {
        return Err(domain("expected squared distance is zero"));
    }
    let var_a = (saa / m - ma * ma) * m / (m - 1.0);
    let var_b = (sbb / m - mb * mb) * m / (m - 1.0);
    let cov = (sab / m - ma * mb) * m / (m - 1.0);
    let r = ma / mb;
    let var_r = (var_a - 2.0 * r * cov + r * r * var_b).max(0.0) / (m * mb * mb);
    Ok(NuEstimate {
        nu_hat: r,
        standard_error: math::sqrt(var_r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub step: usize,
    pub avg_curvature: f64,
    pub min_curvature: f64,
    pub nu: Option<NuEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTrace {
    pub dataset: String,
    pub lambda: f64,
    pub stride: usize,
    pub samples: Vec<CurvatureSample>,
}

impl CurvatureTrace {
    /// Path-level `ν = min_t (ν̂_t − SE_t)`; `None` without ν̂ probes.
    pub fn path_nu(&self) -> Option<f64> {
        self.samples
            .iter()
            .filter_map(|s| s.nu.map(|e| e.nu_hat - e.standard_error))
            .reduce(f64::min)
    }
}

/// Monte-Carlo settings for attaching `ν̂` to each probe.
#[derive(Debug, Clone, PartialEq)]
pub struct NuProbe {
    pub x_star: ParameterVector,
    pub sigma: f64,
    pub draws: usize,
    pub seed: u64,
}

/// Probes every snapshot whose step satisfies `(t − 1) % stride == 0`.
///
/// The data Hessian is computed once per snapshot at `spec.lambda`; each
/// overlay `λ'` adds `(λ' − spec.lambda) I` instead of retraining.
pub fn curvature_trace(
    ds: &Dataset,
    dataset: &str,
    spec: &LossSpec,
    snapshots: &[(usize, ParameterVector)],
    stride: usize,
    lambdas: &[f64],
    nu: Option<&NuProbe>,
) -> Result<Vec<CurvatureTrace>> {
    if spec.kind != LossKind::Logistic {
        return Err(Error::Unsupported("curvature probes need binary logistic".into()));
    }
    if stride == 0 {
        return Err(domain("probe stride must be >= 1"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(domain("overlay lambdas must be >= 0"));
    }
    let picked: Vec<&(usize, ParameterVector)> = snapshots.iter().filter(|(t, _)| (t.max(&1) - 1) % stride == 0).collect();
    if picked.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(domain("snapshot steps must be strictly increasing"));
    }
    let mut traces: Vec<CurvatureTrace> = lambdas
        .iter()
        .map(|&lambda| CurvatureTrace {
            dataset: dataset.into(),
            lambda,
            stride,
            samples: Vec::with_capacity(picked.len()),
        })
        .collect();
    for (t, w) in picked {
        let h = hessian(spec, ds, w)?;
        for (k, trace) in traces.iter_mut().enumerate() {
            let hl = h.shifted(trace.lambda - spec.lambda);
            let nu_hat = match nu {
                Some(probe) => {
                    let overlay = LossSpec { lambda: trace.lambda, ..*spec };
                    let glm = Glm::new(ds, overlay)?;
                    let s = seed::derive(probe.seed, &[*t as u64, k as u64]);
                    Some(estimate_nu(&glm, w, &probe.x_star, probe.sigma, probe.draws, s)?)
                }
                None => None,
            };
            trace.samples.push(CurvatureSample {
                step: *t,
                avg_curvature: average_curvature(&hl),
                min_curvature: min_curvature(&hl, trace.lambda)?,
                nu: nu_hat,
            });
        }
    }
    Ok(traces)
}
