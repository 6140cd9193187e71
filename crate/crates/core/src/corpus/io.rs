//! Dataset file: JSON Lines.
//!
//! The first line is a header `{"format":"gdrift-dataset","version":1,"count":N}`.
//! Each following line is one sample:
//!
//! ```text
//! {"id":0,"prompt":"Q: ... A:","answer":"Paris","label":"member",
//!  "origin":"member","fact_id":17,"template_id":0,"split":"train"}
//! ```
//!
//! `label` is `member` or `nonmember`; `origin` is `member`, `future_fact` or
//! `counterfactual`; `split` is `train`, `validation` or `test` and may be
//! absent. Records appear in id order with ids `0..N`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Label, Origin, Sample, Split, Vocabulary};
use crate::error::{Error, Result};

pub const FORMAT: &str = "gdrift-dataset";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: usize,
    prompt: String,
    answer: String,
    label: Label,
    origin: Origin,
    fact_id: usize,
    template_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

/// Samples read from a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub samples: Vec<Sample>,
    /// Present when every record carries a split.
    pub splits: Option<Vec<Split>>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "dataset",
        detail: detail.into(),
    }
}

pub fn encode_dataset(samples: &[Sample], splits: Option<&[Split]>) -> Result<String> {
    if let Some(sp) = splits {
        if sp.len() != samples.len() {
            return Err(Error::Input(format!("{} samples but {} splits", samples.len(), sp.len())));
        }
    }
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        count: samples.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for (i, s) in samples.iter().enumerate() {
        if s.id != i {
            return Err(Error::Input(format!("sample at position {i} has id {}", s.id)));
        }
        let rec = Record {
            id: s.id,
            prompt: s.prompt.clone(),
            answer: s.answer.clone(),
            label: s.label(),
            origin: s.origin,
            fact_id: s.fact_id,
            template_id: s.template_id,
            split: splits.map(|sp| sp[i]),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes")).expect("string write");
    }
    Ok(out)
}

pub fn decode_dataset(text: &str, vocab: &Vocabulary) -> Result<DatasetFile> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| bad("empty file"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(format!(
            "expected {FORMAT} version {VERSION}, found {} version {}",
            header.format, header.version
        )));
    }
    let mut samples = Vec::with_capacity(header.count);
    let mut splits = Vec::with_capacity(header.count);
    for (n, line) in lines {
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        if rec.id != samples.len() {
            return Err(bad(format!("line {}: expected id {}, found {}", n + 1, samples.len(), rec.id)));
        }
        if rec.label != rec.origin.label() {
            return Err(bad(format!("line {}: label {:?} contradicts origin {:?}", n + 1, rec.label, rec.origin)));
        }
        splits.push(rec.split);
        samples.push(Sample::new(
            rec.id,
            rec.prompt,
            rec.answer,
            rec.origin,
            rec.fact_id,
            rec.template_id,
            vocab,
        )?);
    }
    if samples.len() != header.count {
        return Err(bad(format!("header promises {} records, found {}", header.count, samples.len())));
    }
    let splits = if splits.iter().all(Option::is_some) {
        Some(splits.into_iter().flatten().collect())
    } else if splits.iter().all(Option::is_none) {
        None
    } else {
        return Err(bad("split given for some records but not all"));
    };
    Ok(DatasetFile { samples, splits })
}

pub fn write_dataset(path: &Path, samples: &[Sample], splits: Option<&[Split]>) -> Result<()> {
    crate::fsutil::write_atomic(path, encode_dataset(samples, splits)?.as_bytes())
}

pub fn read_dataset(path: &Path, vocab: &Vocabulary) -> Result<DatasetFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&text, vocab)
}
