//! Experiment orchestration.
//!
//! A run lives in one output directory. Each command reads the artifacts of
//! earlier commands through the run manifest, which refuses any file whose
//! checksum no longer matches, and records what it writes. All writes are
//! atomic.

mod commands;
mod config;
mod manifest;
mod report;

pub use commands::{
    ablate, attack_name, consistency, control, drift_quantities, drift_report, drift_statistics, evaluate,
    evaluate_tables, extract, gen_data, run_all, train, ClassifierRecord, DatasetSummary, Evaluation,
    ExtractSummary, RunSummary, TrainReport,
};
pub use config::{
    AttackConfig, ClassifierConfig, ConsistencyConfig, CorpusConfig, ExperimentConfig, ModelSection, TrainOn,
    TrainingConfig, CONFIG_VERSION,
};
pub use manifest::{Artifact, RunManifest, MANIFEST_FILE};
pub use report::{
    empirical_cdf, render_ablation, std_dev, AttackResult, Cdf, ConsistencyReport, ConsistencyRow, DriftReport,
    DriftRow, DriftSummary, EvalReport, FactSpread, DRIFT_QUANTITIES,
};

/// Report key of the drift classifier.
pub const GDRIFT_KEY: &str = "gdrift";

/// Artifact names and their paths inside the run directory.
pub mod files {
    pub const DATASET: (&str, &str) = ("dataset", "dataset.jsonl");
    pub const CHECKPOINT: (&str, &str) = ("checkpoint", "model.ckpt");
    pub const TRAIN_LOG: (&str, &str) = ("train_log", "train_log.json");
    pub const FEATURES: (&str, &str) = ("features", "features.csv");
    pub const SCORES: (&str, &str) = ("scores", "scores.csv");
    pub const METRICS: (&str, &str) = ("metrics", "metrics.txt");
    pub const METRICS_JSON: (&str, &str) = ("metrics_json", "metrics.json");
    pub const CLASSIFIER: (&str, &str) = ("classifier", "classifier.json");
    pub const CONTROL: (&str, &str) = ("control", "control.txt");
    pub const ABLATION: (&str, &str) = ("ablation", "ablation.csv");
    pub const DRIFT_REPORT: (&str, &str) = ("drift_report", "drift_report.txt");
    pub const DRIFT_ROWS: (&str, &str) = ("drift_rows", "drift_deltas.csv");
    pub const DRIFT_CDF: (&str, &str) = ("drift_cdf", "drift_cdf.csv");
    pub const CONSISTENCY: (&str, &str) = ("consistency", "consistency.txt");
    pub const CONSISTENCY_ROWS: (&str, &str) = ("consistency_rows", "consistency.csv");
}

#[cfg(test)]
mod tests;
