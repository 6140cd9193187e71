//! Logistic-regression membership classifier, ROC analysis and the feature
//! ablation driver.

mod ablation;
mod logreg;
mod metrics;
mod roc;

pub use ablation::{canonical_specs, run_ablation, AblationRow, AblationSpec};
pub use logreg::{
    fit, objective, sigmoid, solve, FitOptions, LogRegModel, Solution, DEFAULT_FOLDS, DEFAULT_LAMBDA_GRID,
    GRAD_TOL, MAX_ITERATIONS,
};
pub use metrics::{select_threshold, threshold_metrics, ThresholdMetrics};
pub use roc::{auc, roc_auc, RocCurve};

#[cfg(test)]
mod tests;
