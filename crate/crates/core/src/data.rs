//! Sparse labeled datasets, deterministic splits and row normalization.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math;
use crate::seed;

/// Largest feature dimension for which dense matrices (Hessians, dense
/// mirrors) are materialized.
pub const DENSE_LIMIT: usize = 2048;

/// One record's features in canonical sparse form: strictly increasing
/// 0-based indices, no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl FeatureRow {
    /// Builds a row from `(index, value)` pairs. Zero values are dropped;
    /// indices must be strictly increasing and below `dim`.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, f64)>, dim: usize) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<usize> = None;
        for (idx, val) in entries {
            if idx >= dim {
                return Err(domain("feature index out of range"));
            }
            if last.is_some_and(|l| idx <= l) {
                return Err(domain("feature indices must be strictly increasing"));
            }
            if !val.is_finite() {
                return Err(domain("non-finite feature value"));
            }
            last = Some(idx);
            if val != 0.0 {
                indices.push(idx as u32);
                values.push(val);
            }
        }
        Ok(FeatureRow { indices, values, dim })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::from_entries(values.iter().copied().enumerate(), values.len())
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureRow {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    /// `⟨w[offset..offset+dim], row⟩`.
    #[inline]
    pub fn dot_at(&self, w: &[f64], offset: usize) -> f64 {
        self.iter().map(|(i, v)| w[offset + i] * v).sum()
    }

    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.dot_at(w, 0)
    }

    pub fn norm_sq(&self) -> f64 {
        math::norm_sq(&self.values)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Same entries, viewed in a (possibly larger) dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        if self.indices.last().is_some_and(|&i| i as usize >= dim) {
            return Err(domain("cannot shrink row below its largest index"));
        }
        Ok(FeatureRow {
            indices: self.indices.clone(),
            values: self.values.clone(),
            dim,
        })
    }

    fn scaled(&self, factor: f64) -> Self {
        FeatureRow {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            dim: self.dim,
        }
    }
}

/// Labeled examples with `n` rows of dimension `p` and labels in `0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<FeatureRow>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(rows: Vec<FeatureRow>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(domain("feature dimension must be positive"));
        }
        if num_classes < 2 {
            return Err(domain("need at least two classes"));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.dim(),
            });
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(domain("label outside 0..num_classes"));
        }
        Ok(Dataset {
            rows,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &FeatureRow {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        self.rows.iter().map(FeatureRow::norm_sq).fold(0.0, f64::max)
    }

    /// The records at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let rows = idx.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(rows, labels, self.dim, self.num_classes)
    }

    /// Copy with record `i` replaced, for neighboring-dataset checks.
    pub fn replace_record(&self, i: usize, row: FeatureRow, label: usize) -> Result<Dataset> {
        let mut rows = self.rows.clone();
        let mut labels = self.labels.clone();
        rows[i] = row;
        labels[i] = label;
        Dataset::new(rows, labels, self.dim, self.num_classes)
    }

    /// Row-major `n × p` dense copy; only for `p ≤ DENSE_LIMIT`.
    pub fn dense_mirror(&self) -> Result<Vec<f64>> {
        if self.dim > DENSE_LIMIT {
            return Err(Error::Unsupported(alloc::format!(
                "dense mirror for p={} > {}",
                self.dim,
                DENSE_LIMIT
            )));
        }
        let mut out = alloc::vec![0.0; self.len() * self.dim];
        for (r, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter() {
                out[r * self.dim + j] = v;
            }
        }
        Ok(out)
    }
}

/// Train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(domain("train_fraction must lie in (0, 1)"));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded permutation, then the first `⌊f·n⌋` records train and the rest test.
pub fn train_test_split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    let n = ds.len();
    let n_train = libm::floor(spec.train_fraction * n as f64) as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::EmptyDataset);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(spec.seed));
    let train = ds.subset(&perm[..n_train])?;
    let test = ds.subset(&perm[n_train..])?;
    Ok((train, test))
}

/// Scales every nonzero row to unit L2 norm.
pub fn row_l2_normalize(ds: &Dataset) -> Dataset {
    let rows = ds
        .rows
        .iter()
        .map(|r| {
            let nrm = math::sqrt(r.norm_sq());
            if nrm > 0.0 {
                r.scaled(1.0 / nrm)
            } else {
                r.clone()
            }
        })
        .collect();
    Dataset {
        rows,
        labels: ds.labels.clone(),
        dim: ds.dim,
        num_classes: ds.num_classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy(n: usize) -> Dataset {
        let rows = (0..n)
            .map(|i| FeatureRow::from_dense(&[i as f64, 1.0]).unwrap())
            .collect();
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::new(rows, labels, 2, 2).unwrap()
    }

    #[test]
    fn row_rejects_unsorted_and_drops_zeros() {
        assert!(FeatureRow::from_entries(vec![(2, 1.0), (1, 1.0)], 3).is_err());
        assert!(FeatureRow::from_entries(vec![(1, 1.0), (1, 2.0)], 3).is_err());
        assert!(FeatureRow::from_entries(vec![(3, 1.0)], 3).is_err());
        let r = FeatureRow::from_entries(vec![(0, 0.0), (2, 5.0)], 3).unwrap();
        assert_eq!(r.indices(), &[2]);
        assert_eq!(r.to_dense(), vec![0.0, 0.0, 5.0]);
    }

    #[test]
    fn dataset_invariants() {
        assert_eq!(Dataset::new(vec![], vec![], 2, 2), Err(Error::EmptyDataset));
        let r = FeatureRow::zeros(2);
        assert!(Dataset::new(vec![r.clone()], vec![2], 2, 2).is_err());
        assert!(Dataset::new(vec![r.clone()], vec![0], 3, 2).is_err());
        assert!(Dataset::new(vec![r], vec![0, 1], 2, 2).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = toy(10);
        let (tr, te) = train_test_split(&ds, SplitSpec::new(0.8, 3).unwrap()).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = train_test_split(&ds, SplitSpec::new(0.8, 3).unwrap()).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert_eq!(tr.dim(), 2);
        assert_eq!(te.num_classes(), 2);
    }

    #[test]
    fn split_rejects_empty_side() {
        let ds = toy(2);
        assert!(train_test_split(&ds, SplitSpec::new(0.4, 0).unwrap()).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0).is_err());
    }

    #[test]
    fn adult_sized_split_arithmetic() {
        // floor(0.8 * 45220) = 36176, remainder 9044
        assert_eq!(libm::floor(0.8 * 45220.0) as usize, 36176);
        assert_eq!(45220 - 36176, 9044);
    }

    #[test]
    fn normalize_rows() {
        let rows = vec![
            FeatureRow::from_dense(&[3.0, 4.0]).unwrap(),
            FeatureRow::zeros(2),
        ];
        let ds = Dataset::new(rows, vec![0, 1], 2, 2).unwrap();
        let once = row_l2_normalize(&ds);
        let r = once.row(0).to_dense();
        assert!((r[0] - 0.6).abs() < 1e-15 && (r[1] - 0.8).abs() < 1e-15);
        assert_eq!(once.row(1).nnz(), 0);
        let twice = row_l2_normalize(&once);
        for (a, b) in once.row(0).values().iter().zip(twice.row(0).values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_mirror_layout() {
        let ds = toy(3);
        assert_eq!(ds.dense_mirror().unwrap(), vec![0.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
    }
}
