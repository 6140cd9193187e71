use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion-matrix rates for the rule "member iff score > threshold".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
}

pub fn threshold_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ThresholdMetrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Input(format!("{} scores and {} labels", scores.len(), labels.len())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let rate = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    Ok(ThresholdMetrics {
        threshold,
        tpr: rate(tp, fn_),
        fpr: rate(fp, tn),
        accuracy: (tp + tn) as f64 / scores.len() as f64,
    })
}

/// Threshold with the highest accuracy. Candidates are the smallest score and
/// the midpoints between consecutive distinct scores; ties go to the smaller
/// threshold.
pub fn select_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdMetrics> {
    let mut distinct: Vec<f64> = scores.to_vec();
    if distinct.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("scores must be finite".into()));
    }
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut best: Option<ThresholdMetrics> = None;
    let candidates = distinct
        .first()
        .copied()
        .into_iter()
        .chain(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    for t in candidates {
        let m = threshold_metrics(scores, labels, t)?;
        if best.map_or(true, |b| m.accuracy > b.accuracy) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| Error::Input("no scores".into()))
}
