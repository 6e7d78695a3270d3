//! LIBSVM and CSV dataset files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use gradpert_core::data::{Dataset, FeatureRow};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Libsvm,
    Csv,
}

/// Raw labels ordered numerically, then remapped to `0..K`.
fn remap_labels(raw: &[f64], line_of: impl Fn(usize) -> usize) -> Result<(Vec<usize>, usize)> {
    let mut distinct: Vec<f64> = raw.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Parse {
            line: line_of(0),
            message: format!("need at least two distinct labels, found {}", distinct.len()),
        });
    }
    let ids = raw
        .iter()
        .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).unwrap())
        .collect();
    Ok((ids, distinct.len()))
}

fn parse_number(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite {what} {tok:?}"),
        });
    }
    Ok(v)
}

/// Parses `<label> <idx>:<val> ...` lines with 1-based indices. The feature
/// dimension is the largest index seen, or `p_hint` if that is larger.
pub fn parse_libsvm(text: &str, p_hint: Option<usize>) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut lines = Vec::new();
    let mut max_index = 0;
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut toks = body.split_whitespace();
        let label = parse_number(toks.next().unwrap(), lineno, "label")?;
        let mut row = Vec::new();
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = i.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad index {i:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "indices are 1-based".into(),
                });
            }
            if row.last().is_some_and(|&(prev, _)| prev >= idx - 1) {
                return Err(Error::Parse {
                    line: lineno,
                    message: "indices must be strictly increasing".into(),
                });
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, parse_number(v, lineno, "value")?));
        }
        raw_labels.push(label);
        entries.push(row);
        lines.push(lineno);
    }
    if entries.is_empty() {
        return Err(gradpert_core::Error::EmptyDataset.into());
    }
    let dim = max_index.max(p_hint.unwrap_or(0)).max(1);
    let (labels, k) = remap_labels(&raw_labels, |i| lines[i])?;
    let rows = entries
        .into_iter()
        .zip(&lines)
        .map(|(row, &line)| {
            FeatureRow::from_entries(row, dim).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(rows, labels, dim, k)?)
}

/// Writes canonical LIBSVM text. Binary labels are written as `-1`/`+1`,
/// multiclass labels as their class ids.
pub fn write_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, &label) in ds.rows().iter().zip(ds.labels()) {
        match (ds.num_classes(), label) {
            (2, 0) => out.push_str("-1"),
            (2, _) => out.push_str("+1"),
            _ => write!(out, "{label}").unwrap(),
        }
        for (j, v) in row.iter() {
            write!(out, " {}:{}", j + 1, v).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses numeric CSV with the label in the last column.
pub fn parse_csv(text: &str, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut raw_labels = Vec::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "need at least one feature and a label".into(),
            });
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::Parse {
                line,
                message: "ragged row".into(),
            });
        }
        let vals = record
            .iter()
            .map(|t| parse_number(t, line, "field"))
            .collect::<Result<Vec<_>>>()?;
        let (label, feats) = vals.split_last().unwrap();
        raw_labels.push(*label);
        rows.push(FeatureRow::from_dense(feats)?);
        lines.push(line);
    }
    let Some(width) = width else {
        return Err(gradpert_core::Error::EmptyDataset.into());
    };
    let (labels, k) = remap_labels(&raw_labels, |i| lines[i])?;
    Ok(Dataset::new(rows, labels, width - 1, k)?)
}

pub fn load(path: &Path, format: Format, csv_header: bool, p_hint: Option<usize>) -> Result<Dataset> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(io_at(path))?;
    match format {
        Format::Libsvm => parse_libsvm(&text, p_hint),
        Format::Csv => parse_csv(&text, csv_header),
    }
}

/// Per-class counts, keyed by class id.
pub fn class_counts(ds: &Dataset) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &l in ds.labels() {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}
