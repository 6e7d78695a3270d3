//! Dense symmetric matrices and the eigensolvers used by the curvature probes.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math;

/// Dimension up to which the cyclic Jacobi method is used.
pub const JACOBI_LIMIT: usize = 256;

const JACOBI_MAX_SWEEPS: usize = 100;
const INVERSE_ITER_MAX: usize = 10_000;
const POWER_ITER_MAX: usize = 100_000;

/// Symmetric `p × p` matrix stored densely in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.add_diagonal(1.0);
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Wraps row-major data, checking shape and symmetry (relative 1e-12).
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (data[i * dim + j] - data[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(domain("matrix is not symmetric"));
                }
            }
        }
        Ok(SymMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once when `i == j`).
    pub(crate) fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] += v;
        if i != j {
            self.data[j * self.dim + i] += v;
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += shift;
        }
    }

    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.clone();
        m.add_diagonal(shift);
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = math::dot(&self.data[i * self.dim..(i + 1) * self.dim], x);
        }
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.dim];
        self.matvec(x, &mut ax);
        math::dot(x, &ax)
    }

    fn frobenius(&self) -> f64 {
        math::norm(&self.data)
    }

    /// All eigenvalues, ascending, by the cyclic Jacobi method.
    pub fn eigenvalues_jacobi(&self) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut a = self.data.clone();
        let scale = self.frobenius();
        if scale == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            if math::sqrt(off) <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                    let c = 1.0 / math::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                }
            }
        }
        if !converged {
            let off: f64 = (0..n)
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            return Err(Error::NoConvergence {
                iterations: JACOBI_MAX_SWEEPS,
                residual: math::sqrt(off),
            });
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eig.sort_by(f64::total_cmp);
        Ok(eig)
    }

    /// Smallest eigenvalue. Jacobi for `p ≤ JACOBI_LIMIT`, otherwise shifted
    /// inverse power iteration started just below `seed_shift`.
    pub fn min_eigenvalue(&self, seed_shift: f64) -> Result<f64> {
        if self.dim <= JACOBI_LIMIT {
            return Ok(self.eigenvalues_jacobi()?[0]);
        }
        self.min_eigenvalue_inverse_iteration(seed_shift)
    }

    /// Largest eigenvalue. Jacobi for `p ≤ JACOBI_LIMIT`, otherwise power iteration.
    pub fn max_eigenvalue(&self) -> Result<f64> {
        if self.dim <= JACOBI_LIMIT {
            return Ok(*self.eigenvalues_jacobi()?.last().unwrap_or(&0.0));
        }
        self.max_eigenvalue_power()
    }

    pub(crate) fn min_eigenvalue_inverse_iteration(&self, seed_shift: f64) -> Result<f64> {
        let n = self.dim;
        let scale = self.frobenius().max(1e-300);
        // The shift must sit strictly below the spectrum for the Cholesky
        // factorization to exist; back off until it does.
        let mut shift = seed_shift - 1e-6 * scale.max(seed_shift.abs());
        let chol = loop {
            match cholesky(&self.shifted(-shift)) {
                Some(l) => break l,
                None => {
                    shift -= (shift.abs() + 1e-3 * scale).max(1e-12);
                    if !shift.is_finite() {
                        return Err(Error::NoConvergence {
                            iterations: 0,
                            residual: f64::NAN,
                        });
                    }
                }
            }
        };
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let nx = math::norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut ax = vec![0.0; n];
        let mut rq = self.quad_form(&x);
        for it in 0..INVERSE_ITER_MAX {
            let mut y = cholesky_solve(&chol, n, &x);
            let ny = math::norm(&y);
            y.iter_mut().for_each(|v| *v /= ny);
            x = y;
            self.matvec(&x, &mut ax);
            let next = math::dot(&x, &ax);
            let resid = math::sqrt(
                ax.iter()
                    .zip(&x)
                    .map(|(a, b)| (a - next * b) * (a - next * b))
                    .sum(),
            );
            if (next - rq).abs() <= 1e-14 * scale && resid <= 1e-9 * scale.max(1.0) {
                return Ok(next);
            }
            rq = next;
            if it + 1 == INVERSE_ITER_MAX {
                return Err(Error::NoConvergence {
                    iterations: INVERSE_ITER_MAX,
                    residual: resid,
                });
            }
        }
        Ok(rq)
    }

    pub(crate) fn max_eigenvalue_power(&self) -> Result<f64> {
        let dominant = self.power_iteration(0.0)?;
        if dominant >= 0.0 {
            return Ok(dominant);
        }
        // The dominant-magnitude eigenvalue is negative; shifting by its
        // magnitude makes the top of the spectrum dominant.
        let shift = -dominant;
        Ok(self.power_iteration(shift)? - shift)
    }

    /// Rayleigh quotient of `A + shift·I` at the converged power iterate.
    fn power_iteration(&self, shift: f64) -> Result<f64> {
        let n = self.dim;
        let scale = self.frobenius() + shift.abs();
        if scale == 0.0 {
            return Ok(0.0);
        }
        let m = self.shifted(shift);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64 * 0.2).collect();
        let nx = math::norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut y = vec![0.0; n];
        let mut rq = f64::INFINITY;
        for _ in 0..POWER_ITER_MAX {
            m.matvec(&x, &mut y);
            let next = math::dot(&x, &y);
            let ny = math::norm(&y);
            if ny == 0.0 {
                return Ok(0.0);
            }
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / ny;
            }
            if (next - rq).abs() <= 1e-13 * scale {
                return Ok(m.quad_form(&x));
            }
            rq = next;
        }
        Err(Error::NoConvergence {
            iterations: POWER_ITER_MAX,
            residual: f64::NAN,
        })
    }
}

/// Lower Cholesky factor (row-major), `None` unless positive definite.
fn cholesky(m: &SymMatrix) -> Option<Vec<f64>> {
    let n = m.dim;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.add_sym(i, j, rng.random_range(-1.0..1.0));
            }
        }
        m
    }

    fn oracle_eigs(m: &SymMatrix) -> Vec<f64> {
        let a = nalgebra::DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice());
        let mut e: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn diagonal_spectrum() {
        let m = SymMatrix::diagonal(&[3.0, 1.0, 2.0]);
        assert_eq!(m.eigenvalues_jacobi().unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.min_eigenvalue(0.0).unwrap(), 1.0);
    }

    #[test]
    fn jacobi_matches_dense_oracle() {
        for seed in 0..5 {
            let m = random_sym(6, seed);
            let got = m.eigenvalues_jacobi().unwrap();
            for (g, e) in got.iter().zip(oracle_eigs(&m)) {
                assert!((g - e).abs() < 1e-8, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn inverse_iteration_finds_bottom() {
        // rank-one plus 0.3 I: bottom eigenvalue 0.3 with multiplicity n-1
        let n = 40;
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.add_sym(i, j, ((i + 1) * (j + 1)) as f64 / (n * n) as f64);
            }
        }
        m.add_diagonal(0.3);
        let v = m.min_eigenvalue_inverse_iteration(0.3).unwrap();
        assert!((v - 0.3).abs() < 1e-8, "{v}");
        let w = random_sym(30, 9).shifted(5.0);
        let e = oracle_eigs(&w);
        let v = w.min_eigenvalue_inverse_iteration(0.0).unwrap();
        assert!((v - e[0]).abs() < 1e-8, "{v} vs {}", e[0]);
        let top = w.max_eigenvalue_power().unwrap();
        assert!((top - e[e.len() - 1]).abs() < 1e-6, "{top} vs {}", e[e.len() - 1]);
    }

    #[test]
    fn asymmetric_input_rejected() {
        assert!(SymMatrix::from_row_major(2, vec![1.0, 2.0, 3.0, 1.0]).is_err());
        assert!(SymMatrix::from_row_major(2, vec![1.0, 2.0, 2.0]).is_err());
    }
}
