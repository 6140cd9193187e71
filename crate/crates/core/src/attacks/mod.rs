//! Membership signals computed from a white-box model.
//!
//! The drift attack reads loss, target logit and a probe projection of the
//! final hidden state, nudges the model one gradient-ascent step on the
//! sample, and reads them again. The baselines score the full prompt-plus-answer
//! sequence: Min-k%, perplexity, zlib-normalised perplexity and a neighbour
//! comparison. Every score is oriented so that higher means more member-like.

pub mod baselines;
mod gdrift;
mod normalize;
mod probe;
pub mod table;

pub use baselines::{
    compressed_len, make_neighbours, min_k_of, min_k_score, neighbour_score, neighbour_score_of, perplexity,
    perplexity_score, sequence_loss, token_log_likelihoods, zlib_score, NLL_CAP,
};
pub use gdrift::{
    gdrift_features, gdrift_trace, DriftFeatures, DriftTrace, WhiteBoxModel, DEFAULT_ETA, FEATURE_NAMES,
};
pub use normalize::{normalize_minmax, MinMax};
pub use probe::ProbeDirection;
pub use table::{FeatureRow, ScoreRow, ScoreTable};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::lm::ModelParams;

/// One attack's score for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackScore {
    pub attack: String,
    pub sample_id: usize,
    pub score: f64,
}

impl ScoreTable {
    pub fn scores(&self, attack: &str) -> Option<Vec<AttackScore>> {
        let col = self.column(attack)?;
        Some(
            self.rows
                .iter()
                .zip(col)
                .map(|(r, score)| AttackScore {
                    attack: attack.to_string(),
                    sample_id: r.sample_id,
                    score,
                })
                .collect(),
        )
    }
}

/// Drift features for every sample in order, restoring the model after each
/// one. Fails if the parameter checksum at the end differs from the start.
pub fn extract_features(
    params: &mut ModelParams,
    samples: &[Sample],
    probe: &ProbeDirection,
    eta: f64,
) -> Result<Vec<FeatureRow>> {
    let start = params.checksum();
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let features = gdrift_features(params, &s.prompt_tokens, s.target(), probe, eta).map_err(|e| match e {
            Error::Integrity(m) => Error::Integrity(format!("sample {}: {m}", s.id)),
            other => other,
        })?;
        rows.push(FeatureRow {
            sample_id: s.id,
            label: s.label(),
            features,
        });
    }
    let end = params.checksum();
    if end != start {
        return Err(Error::Integrity(format!("parameter checksum changed during extraction: {start} -> {end}")));
    }
    Ok(rows)
}

/// Settings for the baseline scorers.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOptions {
    pub k_percents: Vec<f64>,
    pub n_neighbours: usize,
    pub seed: u64,
}

pub const PERPLEXITY: &str = "perplexity";
pub const ZLIB: &str = "zlib";
pub const NEIGHBOUR: &str = "neighbour";

pub fn min_k_column(k_percent: f64) -> String {
    format!("min_k_{k_percent}")
}

/// Baseline scores for every sample: one Min-k% column per `k`, then
/// perplexity, zlib and neighbour.
pub fn score_baselines(params: &ModelParams, samples: &[Sample], opts: &BaselineOptions) -> Result<ScoreTable> {
    let mut columns: Vec<String> = opts.k_percents.iter().map(|&k| min_k_column(k)).collect();
    columns.extend([PERPLEXITY, ZLIB, NEIGHBOUR].map(String::from));
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let seq = s.sequence();
        let ll = token_log_likelihoods(params, &seq)?;
        let mut scores = opts
            .k_percents
            .iter()
            .map(|&k| min_k_of(&ll, k))
            .collect::<Result<Vec<f64>>>()?;
        let ppl = baselines::perplexity_of(&ll)?;
        let text = format!("{} {}", s.prompt, s.answer);
        scores.push(-ppl);
        scores.push(-ppl / (8 * compressed_len(text.as_bytes())) as f64);
        let nb_seed = baselines::neighbour_seed(opts.seed, s.id);
        scores.push(neighbour_score(params, &seq, s.prompt_tokens.len(), opts.n_neighbours, nb_seed)?);
        rows.push(ScoreRow {
            sample_id: s.id,
            label: s.label(),
            scores,
        });
    }
    Ok(ScoreTable { columns, rows })
}
