use alloc::vec;

use crate::error::{Error, Result};
use crate::math;
use crate::models::{Objective, ParameterVector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Output of [`nonprivate_optimum`]: the point and its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub params: ParameterVector,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Full-batch, unclipped accelerated gradient descent with backtracking
/// and gradient-based adaptive restarts; stops once `‖∇F(x)‖ ≤ tol`.
///
/// The backtracking test is `⟨∇F(x⁺) − ∇F(y), x⁺ − y⟩ ≤ (L/2)‖x⁺ − y‖²`,
/// which for convex `F` implies the usual quadratic upper bound and stays
/// meaningful when function values stop resolving differences.
pub fn nonprivate_optimum<O: Objective + ?Sized>(obj: &O, tol: f64) -> Result<ReferenceSolution> {
    let dim = obj.dim();
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut gt = vec![0.0; dim];
    let mut step = vec![0.0; dim];
    let mut lipschitz: f64 = 1.0;
    let mut momentum: f64 = 1.0;
    let mut fy = obj.gradient(&y, None, &mut gy);
    let mut gnorm = math::norm(&gy);

    for it in 0..MAX_ITERATIONS {
        if gnorm <= tol {
            return Ok(ReferenceSolution {
                params: ParameterVector::from(y),
                objective: fy,
                grad_norm: gnorm,
                iterations: it,
            });
        }
        lipschitz *= 0.9;
        let ft = loop {
            for (((t, s), yi), gi) in trial.iter_mut().zip(step.iter_mut()).zip(&y).zip(&gy) {
                *s = -gi / lipschitz;
                *t = yi + *s;
            }
            let f = obj.gradient(&trial, None, &mut gt);
            let curv: f64 = gt.iter().zip(&gy).zip(&step).map(|((a, b), s)| (a - b) * s).sum();
            if curv <= 0.5 * lipschitz * math::norm_sq(&step) || lipschitz > 1e300 {
                break f;
            }
            lipschitz *= 2.0;
        };
        if !math::all_finite(&trial) || !ft.is_finite() {
            return Err(Error::Diverged {
                step: it,
                norm: math::norm(&trial),
            });
        }
        let ascent: f64 = gy.iter().zip(trial.iter().zip(&x)).map(|(g, (t, xi))| g * (t - xi)).sum();
        if ascent > 0.0 {
            momentum = 1.0;
            x.copy_from_slice(&trial);
            y.copy_from_slice(&trial);
            gy.copy_from_slice(&gt);
            fy = ft;
        } else {
            let next = 0.5 * (1.0 + math::sqrt(1.0 + 4.0 * momentum * momentum));
            let beta = (momentum - 1.0) / next;
            for ((yi, ti), xi) in y.iter_mut().zip(&trial).zip(&x) {
                *yi = ti + beta * (ti - xi);
            }
            x.copy_from_slice(&trial);
            momentum = next;
            if beta == 0.0 {
                gy.copy_from_slice(&gt);
                fy = ft;
            } else {
                fy = obj.gradient(&y, None, &mut gy);
            }
        }
        gnorm = math::norm(&gy);
        // The last accepted iterate may already be certified even if y is not.
        if gnorm > tol && math::norm(&gt) <= tol {
            return Ok(ReferenceSolution {
                params: ParameterVector::from(x),
                objective: ft,
                grad_norm: math::norm(&gt),
                iterations: it + 1,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: gnorm,
    })
}
