//! Comma-separated feature and score tables.
//!
//! Both start with a header row. The first two columns are `sample_id` and
//! `label` (1 for member, 0 for non-member); the remaining columns are real
//! numbers written in Rust's shortest round-trip form, so reading a table back
//! gives bitwise-identical values.

use std::fmt::Write as _;
use std::path::Path;

use super::gdrift::{DriftFeatures, FEATURE_NAMES};
use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub sample_id: usize,
    pub label: Label,
    pub features: DriftFeatures,
}

/// Per-sample scores from one or more attacks, one column per attack.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub columns: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub sample_id: usize,
    pub label: Label,
    pub scores: Vec<f64>,
}

impl ScoreTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.scores[j]).collect())
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "table",
        detail: detail.into(),
    }
}

fn label_cell(label: Label) -> &'static str {
    if label.is_member() {
        "1"
    } else {
        "0"
    }
}

fn parse_label(cell: &str) -> Result<Label> {
    match cell {
        "1" => Ok(Label::Member),
        "0" => Ok(Label::Nonmember),
        other => Err(bad(format!("label must be 0 or 1, got {other:?}"))),
    }
}

fn encode(columns: &[&str], rows: impl Iterator<Item = (usize, Label, Vec<f64>)>) -> String {
    let mut out = String::from("sample_id,label");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (id, label, values) in rows {
        write!(out, "{id},{}", label_cell(label)).expect("string write");
        for v in values {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

type Parsed = (Vec<String>, Vec<(usize, Label, Vec<f64>)>);

fn decode(text: &str) -> Result<Parsed> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty table"))?.split(',').collect();
    if header.len() < 2 || header[0] != "sample_id" || header[1] != "label" {
        return Err(bad("header must start with sample_id,label"));
    }
    let columns: Vec<String> = header[2..].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(bad(format!("row {}: {} cells, header has {}", n + 1, cells.len(), header.len())));
        }
        let id = cells[0]
            .parse()
            .map_err(|_| bad(format!("row {}: bad sample id {:?}", n + 1, cells[0])))?;
        let label = parse_label(cells[1])?;
        let values = cells[2..]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("row {}: bad value {c:?}", n + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id, label, values));
    }
    Ok((columns, rows))
}

pub fn encode_features(rows: &[FeatureRow]) -> String {
    encode(
        &FEATURE_NAMES,
        rows.iter().map(|r| (r.sample_id, r.label, r.features.to_array().to_vec())),
    )
}

pub fn decode_features(text: &str) -> Result<Vec<FeatureRow>> {
    let (columns, rows) = decode(text)?;
    if !columns.iter().map(String::as_str).eq(FEATURE_NAMES) {
        return Err(bad(format!("feature columns must be {FEATURE_NAMES:?}, got {columns:?}")));
    }
    rows.into_iter()
        .map(|(sample_id, label, v)| {
            let arr: [f64; 7] = v.try_into().expect("width checked against header");
            Ok(FeatureRow {
                sample_id,
                label,
                features: DriftFeatures::from_array(arr).map_err(|e| bad(e.to_string()))?,
            })
        })
        .collect()
}

pub fn encode_scores(table: &ScoreTable) -> String {
    let cols: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    encode(&cols, table.rows.iter().map(|r| (r.sample_id, r.label, r.scores.clone())))
}

pub fn decode_scores(text: &str) -> Result<ScoreTable> {
    let (columns, rows) = decode(text)?;
    Ok(ScoreTable {
        columns,
        rows: rows
            .into_iter()
            .map(|(sample_id, label, scores)| ScoreRow {
                sample_id,
                label,
                scores,
            })
            .collect(),
    })
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    crate::fsutil::write_atomic(path, encode_features(rows).as_bytes())
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    decode_features(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_scores(path: &Path, table: &ScoreTable) -> Result<()> {
    crate::fsutil::write_atomic(path, encode_scores(table).as_bytes())
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    decode_scores(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
