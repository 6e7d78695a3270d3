//! Experiment configuration (JSON, unknown keys rejected).

use std::path::{Path, PathBuf};

use gradpert_core::models::LossKind;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::formats::Format;

pub const OUTPUT_DIR_ENV: &str = "GRADPERT_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DpGd,
    DpSgd,
    OutGd,
    OutSgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::DpGd, Algorithm::DpSgd, Algorithm::OutGd, Algorithm::OutSgd];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DpGd => "dp_gd",
            Algorithm::DpSgd => "dp_sgd",
            Algorithm::OutGd => "out_gd",
            Algorithm::OutSgd => "out_sgd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
    /// Display name; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub csv_header: bool,
    #[serde(default)]
    pub p_hint: Option<usize>,
    #[serde(default)]
    pub normalize_rows: bool,
    /// Sparse, wide data: smaller clip and larger rates by default.
    #[serde(default)]
    pub high_dimensional: bool,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

impl DatasetConfig {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_objective")]
    pub objective: LossKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Defaults to 1.0, or 0.5 for high-dimensional data.
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Defaults to `1/n²` with `n` the training size.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: Vec<usize>,
    /// Defaults to {0.1, 1, 5}, or {0.2, 2, 10} for high-dimensional data.
    #[serde(default)]
    pub learning_rates: Option<Vec<f64>>,
    /// Constant rates tried by one-pass output-perturbed SGD.
    #[serde(default = "default_out_sgd_rates")]
    pub output_sgd_learning_rates: Vec<f64>,
    #[serde(default = "default_sampling_ratio")]
    pub sampling_ratio: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Drop all privacy noise (non-private ablation).
    #[serde(default)]
    pub zero_noise: bool,
    #[serde(default)]
    pub average_iterates: bool,
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

fn default_format() -> Format {
    Format::Libsvm
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_objective() -> LossKind {
    LossKind::Logistic
}
fn default_lambda() -> f64 {
    1e-4
}
fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_epsilons() -> Vec<f64> {
    vec![0.1]
}
fn default_steps() -> Vec<usize> {
    vec![50, 200, 800]
}
fn default_out_sgd_rates() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1]
}
fn default_sampling_ratio() -> f64 {
    0.1
}
fn default_repeats() -> usize {
    20
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn for_dataset(path: impl Into<PathBuf>) -> Self {
        let json = serde_json::json!({ "dataset": { "path": path.into() } });
        serde_json::from_value(json).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::from_json(&text)
    }

    pub fn clip(&self) -> f64 {
        self.clip
            .unwrap_or(if self.dataset.high_dimensional { 0.5 } else { 1.0 })
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.learning_rates.clone().unwrap_or_else(|| {
            if self.dataset.high_dimensional {
                vec![0.2, 2.0, 10.0]
            } else {
                vec![0.1, 1.0, 5.0]
            }
        })
    }

    /// `output_dir`, unless overridden by the environment.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| self.output_dir.clone(), PathBuf::from)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if self.algorithms.is_empty() || self.epsilons.is_empty() || self.steps.is_empty() {
            return bad("algorithm, epsilon and step grids must be nonempty");
        }
        if !positive(&self.epsilons) {
            return bad("epsilons must be > 0");
        }
        if self.steps.contains(&0) {
            return bad("steps must be >= 1");
        }
        let rates = self.learning_rates();
        if rates.is_empty() || !positive(&rates) || !positive(&self.output_sgd_learning_rates) {
            return bad("learning rates must be nonempty and > 0");
        }
        if self.algorithms.contains(&Algorithm::OutSgd) && self.output_sgd_learning_rates.is_empty() {
            return bad("output_sgd_learning_rates must be nonempty");
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        if !(self.lambda >= 0.0) || !(self.clip() > 0.0) {
            return bad("need lambda >= 0 and clip > 0");
        }
        if !(self.sampling_ratio > 0.0 && self.sampling_ratio <= 1.0) {
            return bad("sampling_ratio must lie in (0, 1]");
        }
        if self.delta.is_some_and(|d| !(d > 0.0 && d < 1.0)) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"dataset":{"path":"data/adult.libsvm"}}"#).unwrap();
        assert_eq!(cfg.lambda, 1e-4);
        assert_eq!(cfg.clip(), 1.0);
        assert_eq!(cfg.steps, [50, 200, 800]);
        assert_eq!(cfg.learning_rates(), [0.1, 1.0, 5.0]);
        assert_eq!(cfg.repeats, 20);
        assert_eq!(cfg.algorithms.len(), 4);
        assert_eq!(cfg.dataset.display_name(), "adult");
        assert_eq!(cfg, ExperimentConfig::for_dataset("data/adult.libsvm"));
    }

    #[test]
    fn high_dimensional_defaults() {
        let cfg =
            ExperimentConfig::from_json(r#"{"dataset":{"path":"x","high_dimensional":true}}"#).unwrap();
        assert_eq!(cfg.clip(), 0.5);
        assert_eq!(cfg.learning_rates(), [0.2, 2.0, 10.0]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::from_json(r#"{"dataset":{"path":"x"},"lamda":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dataset":{"path":"x","bogus":1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dataset":{"path":"x"},"epsilons":[]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dataset":{"path":"x"},"repeats":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dataset":{"path":"x"},"algorithms":["amp"]}"#).is_err());
    }
}
