//! Report types and their plain-text and CSV renderings.
//!
//! Renderings contain no paths, times or other run-specific values, so the
//! same configuration always produces the same bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attacks::MinMax;
use crate::classifier::AblationRow;

/// Test-split result of one attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    /// Display name, e.g. `G-Drift` or `Min-10%`.
    pub attack: String,
    /// File-safe key, e.g. `gdrift` or `min_k_10`.
    pub key: String,
    pub auc: f64,
    /// Chosen on the validation split by maximum accuracy.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
    /// `(max FPR, best TPR)` pairs from the test ROC curve.
    pub tpr_at_fpr: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub test_members: usize,
    /// Penalty picked by cross-validation for the drift classifier.
    pub lambda: f64,
    pub cv_auc: Vec<(f64, f64)>,
    pub labels_shuffled: bool,
    pub attacks: Vec<AttackResult>,
}

impl EvalReport {
    pub fn get(&self, attack: &str) -> Option<&AttackResult> {
        self.attacks.iter().find(|a| a.attack == attack || a.key == attack)
    }

    /// Highest AUC among every attack except the drift classifier.
    pub fn best_baseline(&self) -> Option<&AttackResult> {
        self.attacks
            .iter()
            .filter(|a| a.key != super::GDRIFT_KEY)
            .max_by(|a, b| a.auc.total_cmp(&b.auc))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let title = if self.labels_shuffled {
            "membership inference, shuffled-label control"
        } else {
            "membership inference"
        };
        let _ = writeln!(out, "# {title}");
        let _ = writeln!(
            out,
            "splits: train {}, validation {}, test {} ({} members, {} non-members)",
            self.n_train,
            self.n_validation,
            self.n_test,
            self.test_members,
            self.n_test - self.test_members
        );
        let cv: Vec<String> = self.cv_auc.iter().map(|(l, a)| format!("{l}:{a:.4}")).collect();
        let _ = writeln!(out, "drift classifier: lambda {} (cv auc {})", self.lambda, cv.join(" "));
        let _ = writeln!(out);
        let mut header = format!(
            "{:<12} {:>7} {:>7} {:>7} {:>7} {:>12}",
            "attack", "auc", "tpr", "fpr", "acc", "threshold"
        );
        if let Some(first) = self.attacks.first() {
            for (f, _) in &first.tpr_at_fpr {
                header.push_str(&format!(" {:>12}", format!("tpr@{f}")));
            }
        }
        let _ = writeln!(out, "{header}");
        for a in &self.attacks {
            let mut line = format!(
                "{:<12} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>12.5e}",
                a.attack, a.auc, a.tpr, a.fpr, a.accuracy, a.threshold
            );
            for (_, t) in &a.tpr_at_fpr {
                line.push_str(&format!(" {t:>12.4}"));
            }
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut out = String::from("feature_set,auc\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.name, r.auc);
    }
    out
}

/// Names of the four drift quantities, in report order.
pub const DRIFT_QUANTITIES: [&str; 4] = ["loss_delta", "logit_delta", "proj_delta", "hidden_drift"];

/// Empirical CDF as `(value, fraction <= value)` steps, starting at
/// `(min, 0)` and ending at `(max, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub quantity: String,
    pub class: String,
    pub points: Vec<(f64, f64)>,
}

pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut points = Vec::with_capacity(v.len() + 1);
    if let Some(&first) = v.first() {
        points.push((first, 0.0));
    }
    for (i, &x) in v.iter().enumerate() {
        if i + 1 < v.len() && v[i + 1] == x {
            continue;
        }
        points.push((x, (i + 1) as f64 / n));
    }
    points
}

/// Per-class means of the min-max normalised drift quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub member_means: [f64; 4],
    pub nonmember_means: [f64; 4],
}

impl DriftSummary {
    pub fn render(&self) -> String {
        let mut out = String::from("# normalised drift (min-max, train statistics)\n");
        let _ = writeln!(out, "members {}, non-members {}", self.n_members, self.n_nonmembers);
        let _ = writeln!(out, "{:<14} {:>10} {:>10}", "quantity", "member", "non-member");
        for (i, q) in DRIFT_QUANTITIES.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<14} {:>10.3} {:>10.3}",
                q, self.member_means[i], self.nonmember_means[i]
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub summary: DriftSummary,
    pub normalization: MinMax,
    /// Raw and normalised quantities for every sample, in dataset order.
    pub rows: Vec<DriftRow>,
    pub cdfs: Vec<Cdf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub sample_id: usize,
    pub member: bool,
    pub split: String,
    pub raw: [f64; 4],
    pub normalized: [f64; 4],
}

impl DriftReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("sample_id,label,split");
        for q in DRIFT_QUANTITIES {
            let _ = write!(out, ",{q}");
        }
        for q in DRIFT_QUANTITIES {
            let _ = write!(out, ",norm_{q}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.sample_id, u8::from(r.member), r.split);
            for v in r.raw.iter().chain(&r.normalized) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("quantity,class,value,cdf\n");
        for c in &self.cdfs {
            for (v, p) in &c.points {
                let _ = writeln!(out, "{},{},{v},{p}", c.quantity, c.class);
            }
        }
        out
    }
}

/// Probe projection before and after the nudge for one paraphrase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub fact_id: usize,
    pub template_id: usize,
    pub prompt: String,
    pub answer: String,
    /// `member` or `non-member`.
    pub class: String,
    pub alpha_before: f64,
    pub alpha_after: f64,
    pub abs_delta: f64,
}

/// Standard deviation of `|delta alpha|` across one fact's paraphrases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactSpread {
    pub fact_id: usize,
    pub member_std: f64,
    pub nonmember_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub k: usize,
    pub rows: Vec<ConsistencyRow>,
    pub spreads: Vec<FactSpread>,
    pub mean_member_std: f64,
    pub mean_nonmember_std: f64,
}

impl ConsistencyReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("fact_id,template_id,prompt,answer,class,alpha_before,alpha_after,abs_delta\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.fact_id,
                r.template_id,
                csv_text(&r.prompt),
                csv_text(&r.answer),
                r.class,
                r.alpha_before,
                r.alpha_after,
                r.abs_delta
            );
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# paraphrase drift consistency\n");
        let _ = writeln!(out, "{} facts, {} paraphrases each", self.spreads.len(), self.k);
        let _ = writeln!(
            out,
            "mean per-fact std |d alpha|: member {:.4}, non-member {:.4}",
            self.mean_member_std, self.mean_nonmember_std
        );
        let _ = writeln!(out);
        let texts: Vec<String> = self.rows.iter().map(|r| format!("{} {}", r.prompt, r.answer)).collect();
        let w = texts.iter().map(String::len).max().unwrap_or(0).max(6);
        let _ = writeln!(
            out,
            "{:<w$} {:<11} {:>9} {:>9} {:>9}",
            "prompt", "class", "a_before", "a_after", "|d alpha|"
        );
        for (r, text) in self.rows.iter().zip(&texts) {
            let _ = writeln!(
                out,
                "{:<w$} {:<11} {:>9.3} {:>9.3} {:>9.3}",
                text, r.class, r.alpha_before, r.alpha_after, r.abs_delta
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8} {:>11} {:>11}", "fact", "member sd", "non-mem sd");
        for s in &self.spreads {
            let _ = writeln!(out, "{:<8} {:>11.4} {:>11.4}", s.fact_id, s.member_std, s.nonmember_std);
        }
        out
    }
}

/// Quotes a CSV field when it contains a delimiter or quote.
fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}
