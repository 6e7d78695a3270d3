//! CSV tables, plot data, run traces and the provenance manifest.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gradpert_core::curvature::CurvatureTrace;
use gradpert_core::optim::RunTrace;
use serde::Serialize;
use sha1::Sha1;
use sha2::{Digest, Sha256};

use crate::error::{io_at, Error, Result};
use crate::harness::{ResultRow, RunOutcome};

/// Six significant digits, `%g` style: fixed notation for moderate
/// exponents, scientific otherwise, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    fs::write(path, bytes).map_err(io_at(path))
}

fn csv_bytes(header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "dataset",
    "algorithm",
    "epsilon",
    "delta",
    "steps",
    "rate",
    "feasible",
    "noise_multiplier",
    "sampling_ratio",
    "accounting_steps",
    "mean_accuracy",
    "std_accuracy",
    "mean_excess_risk",
    "std_excess_risk",
    "repeats",
];

pub fn table_bytes(rows: &[ResultRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    csv_bytes(
        &RESULT_COLUMNS,
        rows.iter().map(|r| {
            let acct = |f: fn(&crate::harness::Accounting) -> String| r.accounting.as_ref().map_or_else(String::new, f);
            vec![
                r.dataset.clone(),
                r.algorithm.name().into(),
                sig6(r.epsilon),
                sig6(r.delta),
                r.steps.to_string(),
                sig6(r.rate),
                r.feasible.to_string(),
                acct(|a| sig6(a.noise_multiplier)),
                acct(|a| sig6(a.sampling_ratio)),
                acct(|a| a.steps.to_string()),
                sig6(r.mean_accuracy),
                sig6(r.std_accuracy),
                sig6(r.mean_excess_risk),
                sig6(r.std_excess_risk),
                r.repeats.to_string(),
            ]
        }),
    )
}

/// Writes a result table as CSV.
pub fn emit_table(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_file(path, &table_bytes(rows)?)
}

pub const CURVATURE_COLUMNS: [&str; 6] = ["step", "lambda", "avg_curvature", "min_curvature", "nu_hat", "nu_se"];

pub fn curvature_bytes(traces: &[CurvatureTrace]) -> Result<Vec<u8>> {
    if traces.iter().all(|t| t.samples.is_empty()) {
        return Err(Error::Empty);
    }
    let records = traces.iter().flat_map(|t| {
        t.samples.iter().map(move |s| {
            vec![
                s.step.to_string(),
                sig6(t.lambda),
                sig6(s.avg_curvature),
                sig6(s.min_curvature),
                s.nu.map_or_else(String::new, |e| sig6(e.nu_hat)),
                s.nu.map_or_else(String::new, |e| sig6(e.standard_error)),
            ]
        })
    });
    csv_bytes(&CURVATURE_COLUMNS, records)
}

/// Writes curvature traces as plot data.
pub fn emit_plot_data(traces: &[CurvatureTrace], path: &Path) -> Result<()> {
    write_file(path, &curvature_bytes(traces)?)
}

/// Points of a scaling study as plot data.
pub fn emit_scaling(points: &[crate::scaling::ScalingPoint], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty);
    }
    let bytes = csv_bytes(
        &["x", "mean_excess_risk", "se_excess_risk", "noise_multiplier", "steps", "repeats"],
        points.iter().map(|p| {
            vec![
                sig6(p.x),
                sig6(p.mean_excess_risk),
                sig6(p.se_excess_risk),
                sig6(p.noise_multiplier),
                p.steps.to_string(),
                p.repeats.to_string(),
            ]
        }),
    )?;
    write_file(path, &bytes)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    objective: f64,
    accuracy: f64,
    excess_risk: f64,
    final_params: &'a [f64],
    averaged_params: Option<&'a [f64]>,
}

/// `<stem>.jsonl` (one step record per line, iterative methods only) and
/// `<stem>.json` (released parameters and metrics).
pub fn write_run(dir: &Path, stem: &str, released: &[f64], trace: Option<&RunTrace>, outcome: &RunOutcome, objective: f64) -> Result<()> {
    if let Some(t) = trace {
        let mut buf = Vec::new();
        for r in &t.records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        write_file(&dir.join(format!("{stem}.jsonl")), &buf)?;
    }
    let summary = RunSummary {
        seed: outcome.seed,
        objective,
        accuracy: outcome.accuracy,
        excess_risk: outcome.excess_risk,
        final_params: trace.map_or(released, |t| &t.final_params[..]),
        averaged_params: trace.and_then(|t| t.averaged_params.as_deref()),
    };
    write_file(&dir.join(format!("{stem}.json")), &serde_json::to_vec(&summary)?)
}

/// `sha1("blob <len>\0" ‖ bytes)`, as `git hash-object` computes it.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub git_blob: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
    pub notes: Vec<&'static str>,
}

pub const MANIFEST_NOTES: [&str; 3] = [
    "hyperparameters are selected by mean test accuracy over the full grid; selection is not charged to the privacy budget",
    "output-perturbation noise uses the single-shot Gaussian RDP accountant",
    "output-perturbation learning rates are capped at 1/beta_hat",
];

/// Writes `manifest.json` in `dir` listing `files` (relative to `dir`) with
/// their git blob hashes, plus the SHA-256 of the canonical config JSON.
pub fn write_manifest<C: Serialize>(dir: &Path, config: &C, files: &[PathBuf]) -> Result<()> {
    let config_sha256 = sha256_hex(&serde_json::to_vec(config)?);
    let mut entries = Vec::new();
    for f in files {
        let full = dir.join(f);
        let bytes = fs::read(&full).map_err(io_at(&full))?;
        entries.push(ManifestEntry {
            path: f.to_string_lossy().replace('\\', "/"),
            git_blob: git_blob_hash(&bytes),
            bytes: bytes.len(),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256,
        files: entries,
        notes: MANIFEST_NOTES.to_vec(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(io_at(&path))?;
    f.write_all(&bytes).map_err(io_at(&path))
}
