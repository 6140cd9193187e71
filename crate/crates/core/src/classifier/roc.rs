use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ROC curve from a threshold sweep, `(0, 0)` first and `(1, 1)` last.
///
/// Point `i` is the operating point of the rule `score >= thresholds[i]`;
/// the first threshold is `+inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Highest TPR among points with FPR at most `max_fpr`.
    pub fn tpr_at_fpr(&self, max_fpr: f64) -> f64 {
        self.fpr
            .iter()
            .zip(&self.tpr)
            .filter(|(f, _)| **f <= max_fpr)
            .map(|(_, t)| *t)
            .fold(0.0, f64::max)
    }

    /// Two-column `fpr,tpr` text with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in self.fpr.iter().zip(&self.tpr) {
            out.push_str(&format!("{f},{t}\n"));
        }
        out
    }
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!("{} scores and {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let p = labels.iter().filter(|&&l| l).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::Input("AUC needs both classes".into()));
    }
    Ok((p, n))
}

/// ROC curve and area under it.
///
/// Tied scores form a single step, so the trapezoid area equals the
/// probability that a random positive outscores a random negative with ties
/// counted as one half. The area is accumulated in integers and divided once,
/// which makes it exact.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64)> {
    let (p, n) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = RocCurve {
        fpr: vec![0.0],
        tpr: vec![0.0],
        thresholds: vec![f64::INFINITY],
    };
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one positive-negative pair.
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += u128::from(fp - fp0) * u128::from(tp + tp0);
        curve.fpr.push(fp as f64 / n as f64);
        curve.tpr.push(tp as f64 / p as f64);
        curve.thresholds.push(s);
    }
    let auc = twice_area as f64 / (2 * u128::from(p) * u128::from(n)) as f64;
    Ok((curve, auc))
}

pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(roc_auc(scores, labels)?.1)
}
