//! Generalized linear model objectives: per-example losses and gradients,
//! clipping, regularized full objectives, Hessians and smoothness bounds.
//!
//! Softmax parameters are laid out class-major: entry `k * p + j` is the
//! weight of feature `j` for class `k`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureRow, DENSE_LIMIT};
use crate::error::{check_len, domain, Error, Result};
use crate::linalg::SymMatrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Softmax,
}

/// A GLM objective with L2 coefficient `lambda` and clipping threshold `clip`
/// (which doubles as the Lipschitz constant in noise calibration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lambda: f64,
    pub clip: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, lambda: f64, clip: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(domain("lambda must be finite and >= 0"));
        }
        if !(clip > 0.0) {
            return Err(domain("clip threshold must be > 0"));
        }
        Ok(LossSpec { kind, lambda, clip })
    }

    pub fn logistic(lambda: f64, clip: f64) -> Result<Self> {
        Self::new(LossKind::Logistic, lambda, clip)
    }

    pub fn softmax(lambda: f64, clip: f64) -> Result<Self> {
        Self::new(LossKind::Softmax, lambda, clip)
    }

    /// Number of model parameters for `p` features and `k` classes.
    pub fn param_dim(&self, p: usize, k: usize) -> usize {
        match self.kind {
            LossKind::Logistic => p,
            LossKind::Softmax => p * k,
        }
    }

    fn check_classes(&self, k: usize) -> Result<()> {
        match self.kind {
            LossKind::Logistic if k != 2 => Err(domain("logistic loss needs exactly two classes")),
            LossKind::Softmax if k < 2 => Err(domain("softmax loss needs at least two classes")),
            _ => Ok(()),
        }
    }
}

/// Model parameters as a flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn zeros(dim: usize) -> Self {
        ParameterVector(vec![0.0; dim])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        math::all_finite(&self.0)
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub type HessianMatrix = SymMatrix;

/// A finite-sum objective `F(w) = (1/n) Σ f_i(w) + (λ/2)‖w‖²` as seen by
/// the optimizers.
pub trait Objective {
    /// Parameter dimension.
    fn dim(&self) -> usize;

    fn num_examples(&self) -> usize;

    /// L2 coefficient λ.
    fn l2(&self) -> f64;

    /// Adds `Σ_{i ∈ idx} g_i` to `out`, where `g_i` is the un-regularized
    /// per-example gradient, clipped to norm `clip` when given. `None` means
    /// every example in order. Returns the sum of the per-example losses.
    fn accumulate(&self, idx: Option<&[usize]>, w: &[f64], clip: Option<f64>, out: &mut [f64]) -> f64;

    /// Mean un-regularized loss.
    fn data_loss(&self, w: &[f64]) -> f64;

    fn hessian(&self, _w: &[f64]) -> Result<HessianMatrix> {
        Err(Error::Unsupported("hessian for this objective".into()))
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.data_loss(w) + 0.5 * self.l2() * math::norm_sq(w)
    }

    /// Writes the mean (optionally clipped) gradient plus `λw` into `out`
    /// and returns `F(w)`.
    fn gradient(&self, w: &[f64], clip: Option<f64>, out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|v| *v = 0.0);
        let loss = self.accumulate(None, w, clip, out);
        let n = self.num_examples() as f64;
        let lambda = self.l2();
        for (o, wi) in out.iter_mut().zip(w) {
            *o = *o / n + lambda * wi;
        }
        loss / n + 0.5 * lambda * math::norm_sq(w)
    }
}

/// `g` if `‖g‖ ≤ C`, else `g·C/‖g‖`.
pub fn clip(g: &[f64], threshold: f64) -> Vec<f64> {
    let nrm = math::norm(g);
    if nrm <= threshold {
        g.to_vec()
    } else {
        let factor = threshold / nrm;
        g.iter().map(|v| v * factor).collect()
    }
}

/// Logistic labels `{0, 1}` map to margins' sign `{-1, +1}`.
#[inline]
fn sign_of(label: usize) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Loss of one example and the per-class gradient coefficients: the
/// gradient is `coeffs[k] · a` in block `k`.
fn example_coeffs(kind: LossKind, row: &FeatureRow, label: usize, w: &[f64], coeffs: &mut [f64]) -> f64 {
    match kind {
        LossKind::Logistic => {
            let y = sign_of(label);
            let margin = y * row.dot(w);
            let (s, loss) = math::sigmoid_softplus(-margin);
            coeffs[0] = -y * s;
            loss
        }
        LossKind::Softmax => {
            let p = row.dim();
            for (k, c) in coeffs.iter_mut().enumerate() {
                *c = row.dot_at(w, k * p);
            }
            let lse = math::log_sum_exp(coeffs);
            let loss = lse - coeffs[label];
            for (k, c) in coeffs.iter_mut().enumerate() {
                *c = math::exp(*c - lse) - if k == label { 1.0 } else { 0.0 };
            }
            loss
        }
    }
}

fn classes_for(spec: &LossSpec, p: usize, wlen: usize) -> Result<usize> {
    match spec.kind {
        LossKind::Logistic => {
            check_len(p, wlen)?;
            Ok(1)
        }
        LossKind::Softmax => {
            if wlen == 0 || wlen % p != 0 || wlen / p < 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2 * p,
                    found: wlen,
                });
            }
            Ok(wlen / p)
        }
    }
}

/// `f(w; (a, label))` without the regularizer.
pub fn per_example_loss(spec: &LossSpec, row: &FeatureRow, label: usize, w: &[f64]) -> Result<f64> {
    let k = classes_for(spec, row.dim(), w.len())?;
    if label >= k.max(2) {
        return Err(domain("label out of range"));
    }
    let mut coeffs = vec![0.0; k];
    Ok(example_coeffs(spec.kind, row, label, w, &mut coeffs))
}

/// Analytic `∇_w f(w; (a, label))`, dense, without the regularizer.
pub fn per_example_gradient(spec: &LossSpec, row: &FeatureRow, label: usize, w: &[f64]) -> Result<Vec<f64>> {
    let p = row.dim();
    let k = classes_for(spec, p, w.len())?;
    if label >= k.max(2) {
        return Err(domain("label out of range"));
    }
    let mut coeffs = vec![0.0; k];
    example_coeffs(spec.kind, row, label, w, &mut coeffs);
    let mut g = vec![0.0; w.len()];
    for (b, c) in coeffs.iter().enumerate() {
        for (j, v) in row.iter() {
            g[b * p + j] = c * v;
        }
    }
    Ok(g)
}

/// A GLM objective over a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Glm<'a> {
    ds: &'a Dataset,
    spec: LossSpec,
}

impl<'a> Glm<'a> {
    pub fn new(ds: &'a Dataset, spec: LossSpec) -> Result<Self> {
        spec.check_classes(ds.num_classes())?;
        Ok(Glm { ds, spec })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    fn blocks(&self) -> usize {
        match self.spec.kind {
            LossKind::Logistic => 1,
            LossKind::Softmax => self.ds.num_classes(),
        }
    }

    pub fn check_params(&self, w: &[f64]) -> Result<()> {
        check_len(self.dim(), w.len())
    }

    /// Class scores `⟨w_k, a⟩`; for logistic the single margin score.
    pub fn predict(&self, row: &FeatureRow, w: &[f64]) -> usize {
        let p = self.ds.dim();
        match self.spec.kind {
            LossKind::Logistic => usize::from(row.dot(w) > 0.0),
            LossKind::Softmax => (0..self.ds.num_classes())
                .map(|k| row.dot_at(w, k * p))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, s)| if s > best.1 { (k, s) } else { best })
                .0,
        }
    }

    /// Fraction of records of `ds` whose predicted class equals the label.
    pub fn accuracy_on(&self, ds: &Dataset, w: &[f64]) -> f64 {
        let correct = ds
            .rows()
            .iter()
            .zip(ds.labels())
            .filter(|(r, &l)| self.predict(r, w) == l)
            .count();
        correct as f64 / ds.len() as f64
    }

    fn accumulate_one(&self, i: usize, w: &[f64], clip: Option<f64>, coeffs: &mut [f64], out: &mut [f64]) -> f64 {
        let row = self.ds.row(i);
        let p = self.ds.dim();
        let loss = example_coeffs(self.spec.kind, row, self.ds.label(i), w, coeffs);
        // Same arithmetic, in the same order, as `clip(per_example_gradient(..))`.
        let factor = clip.and_then(|c| {
            let mut sq = 0.0;
            for &ck in coeffs.iter() {
                for &v in row.values() {
                    let g = ck * v;
                    sq += g * g;
                }
            }
            let nrm = math::sqrt(sq);
            (nrm > c).then(|| c / nrm)
        });
        for (b, &ck) in coeffs.iter().enumerate() {
            let block = &mut out[b * p..(b + 1) * p];
            match factor {
                Some(f) => {
                    for (j, v) in row.iter() {
                        block[j] += (ck * v) * f;
                    }
                }
                None => {
                    for (j, v) in row.iter() {
                        block[j] += ck * v;
                    }
                }
            }
        }
        loss
    }
}

impl Objective for Glm<'_> {
    fn dim(&self) -> usize {
        self.spec.param_dim(self.ds.dim(), self.ds.num_classes())
    }

    fn num_examples(&self) -> usize {
        self.ds.len()
    }

    fn l2(&self) -> f64 {
        self.spec.lambda
    }

    fn accumulate(&self, idx: Option<&[usize]>, w: &[f64], clip: Option<f64>, out: &mut [f64]) -> f64 {
        let mut coeffs = vec![0.0; self.blocks()];
        let mut loss = 0.0;
        match idx {
            Some(idx) => {
                for &i in idx {
                    loss += self.accumulate_one(i, w, clip, &mut coeffs, out);
                }
            }
            None => {
                for i in 0..self.ds.len() {
                    loss += self.accumulate_one(i, w, clip, &mut coeffs, out);
                }
            }
        }
        loss
    }

    fn data_loss(&self, w: &[f64]) -> f64 {
        let mut coeffs = vec![0.0; self.blocks()];
        let total: f64 = self
            .ds
            .rows()
            .iter()
            .zip(self.ds.labels())
            .map(|(r, &l)| example_coeffs(self.spec.kind, r, l, w, &mut coeffs))
            .sum();
        total / self.ds.len() as f64
    }

    fn hessian(&self, w: &[f64]) -> Result<HessianMatrix> {
        hessian(&self.spec, self.ds, w)
    }
}

/// `(1/n) Σ f(w; d_i) + (λ/2)‖w‖²`.
pub fn full_objective(spec: &LossSpec, ds: &Dataset, w: &[f64]) -> Result<f64> {
    let glm = Glm::new(ds, *spec)?;
    glm.check_params(w)?;
    Ok(glm.value(w))
}

/// Mean per-example gradient (clipped at `spec.clip` when `clipped`) plus `λw`.
pub fn full_gradient(spec: &LossSpec, ds: &Dataset, w: &[f64], clipped: bool) -> Result<Vec<f64>> {
    let glm = Glm::new(ds, *spec)?;
    glm.check_params(w)?;
    let mut g = vec![0.0; w.len()];
    glm.gradient(w, clipped.then_some(spec.clip), &mut g);
    Ok(g)
}

fn check_dense_logistic(spec: &LossSpec, ds: &Dataset) -> Result<()> {
    if spec.kind != LossKind::Logistic {
        return Err(Error::Unsupported("hessian of the softmax objective".into()));
    }
    if ds.dim() > DENSE_LIMIT {
        return Err(Error::Unsupported(format!(
            "dense hessian for p={} > {}",
            ds.dim(),
            DENSE_LIMIT
        )));
    }
    Ok(())
}

/// `(1/n) Σ s_i(1-s_i) a_i a_iᵀ + λI` with `s_i = σ(⟨w, a_i⟩)`.
pub fn hessian(spec: &LossSpec, ds: &Dataset, w: &[f64]) -> Result<HessianMatrix> {
    check_dense_logistic(spec, ds)?;
    check_len(ds.dim(), w.len())?;
    let weights = ds.rows().iter().map(|r| {
        let s = math::sigmoid(r.dot(w));
        s * (1.0 - s)
    });
    let mut h = weighted_gram(ds, weights);
    h.add_diagonal(spec.lambda);
    Ok(h)
}

/// `(1/n) Σ c_i a_i a_iᵀ`.
fn weighted_gram(ds: &Dataset, weights: impl Iterator<Item = f64>) -> SymMatrix {
    let mut h = SymMatrix::zeros(ds.dim());
    for (row, c) in ds.rows().iter().zip(weights) {
        let idx = row.indices();
        let val = row.values();
        for a in 0..idx.len() {
            let ca = c * val[a];
            for b in 0..=a {
                h.add_sym(idx[a] as usize, idx[b] as usize, ca * val[b]);
            }
        }
    }
    h.scale(1.0 / ds.len() as f64);
    h
}

/// `λ_max((1/4n) Σ a_i a_iᵀ) + λ`, the logistic objective's smoothness bound.
pub fn smoothness_bound(ds: &Dataset, spec: &LossSpec) -> Result<f64> {
    check_dense_logistic(spec, ds)?;
    let gram = weighted_gram(ds, core::iter::repeat(0.25));
    Ok(gram.max_eigenvalue()? + spec.lambda)
}

/// A smoothness bound valid for every supported objective: the dense
/// eigenvalue bound where available, otherwise `c·max‖a_i‖² + λ` with
/// `c = 1/4` (logistic) or `1/2` (softmax).
pub fn smoothness_upper_bound(ds: &Dataset, spec: &LossSpec) -> Result<f64> {
    match smoothness_bound(ds, spec) {
        Ok(b) => Ok(b),
        Err(Error::Unsupported(_)) => {
            let c = match spec.kind {
                LossKind::Logistic => 0.25,
                LossKind::Softmax => 0.5,
            };
            Ok(c * ds.max_row_norm_sq() + spec.lambda)
        }
        Err(e) => Err(e),
    }
}

/// `F(x) = ½ (x - c)ᵀ A (x - c)`, a single-example objective for checking
/// optimizer behaviour against closed forms.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: SymMatrix,
    center: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: SymMatrix, center: Vec<f64>) -> Result<Self> {
        check_len(a.dim(), center.len())?;
        Ok(Quadratic { a, center })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.center
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn num_examples(&self) -> usize {
        1
    }

    fn l2(&self) -> f64 {
        0.0
    }

    fn accumulate(&self, idx: Option<&[usize]>, w: &[f64], clip: Option<f64>, out: &mut [f64]) -> f64 {
        let d: Vec<f64> = w.iter().zip(&self.center).map(|(x, c)| x - c).collect();
        let mut g = vec![0.0; d.len()];
        self.a.matvec(&d, &mut g);
        let loss = 0.5 * math::dot(&d, &g);
        let g = match clip {
            Some(c) => self::clip(&g, c),
            None => g,
        };
        let reps = idx.map_or(1, <[usize]>::len);
        for _ in 0..reps {
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += gi;
            }
        }
        loss * reps as f64
    }

    fn data_loss(&self, w: &[f64]) -> f64 {
        let d: Vec<f64> = w.iter().zip(&self.center).map(|(x, c)| x - c).collect();
        0.5 * self.a.quad_form(&d)
    }

    fn hessian(&self, _w: &[f64]) -> Result<HessianMatrix> {
        Ok(self.a.clone())
    }
}
