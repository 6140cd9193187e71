use serde::{Deserialize, Serialize};

use super::logreg::{fit, FitOptions};
use super::roc::auc;
use crate::error::{Error, Result};

/// A named subset of the seven drift features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub name: String,
    /// Kept columns, in feature-vector order.
    pub mask: [bool; 7],
}

impl AblationSpec {
    /// All features except those at `drop`.
    pub fn without(name: &str, drop: &[usize]) -> Self {
        let mut mask = [true; 7];
        for &i in drop {
            mask[i] = false;
        }
        Self {
            name: name.to_string(),
            mask,
        }
    }
}

/// The thirteen feature sets of the standard ablation: everything, each
/// feature left out alone, the hidden drift left out, the before and after
/// groups left out, and each before/after pair left out.
pub fn canonical_specs() -> Vec<AblationSpec> {
    vec![
        AblationSpec::without("all", &[]),
        AblationSpec::without("all but loss before", &[0]),
        AblationSpec::without("all but logit before", &[1]),
        AblationSpec::without("all but feat proj before", &[2]),
        AblationSpec::without("all but loss after", &[3]),
        AblationSpec::without("all but logit after", &[4]),
        AblationSpec::without("all but feat proj after", &[5]),
        AblationSpec::without("all but euclid drift", &[6]),
        AblationSpec::without("all but group before", &[0, 1, 2]),
        AblationSpec::without("all but group after", &[3, 4, 5, 6]),
        AblationSpec::without("all but loss", &[0, 3]),
        AblationSpec::without("all but logit", &[1, 4]),
        AblationSpec::without("all but feat proj", &[2, 5]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub auc: f64,
}

/// Refits the classifier on the training rows for each spec and reports test
/// AUC of its predicted probabilities.
pub fn run_ablation(
    train: (&[Vec<f64>], &[bool]),
    test: (&[Vec<f64>], &[bool]),
    specs: &[AblationSpec],
    opts: &FitOptions,
) -> Result<Vec<AblationRow>> {
    specs
        .iter()
        .map(|spec| {
            if !spec.mask.iter().any(|&k| k) {
                return Err(Error::Input(format!("ablation {:?} keeps no feature", spec.name)));
            }
            let model = fit(train.0, train.1, &spec.mask, opts)?;
            let probs = model.predict_all(test.0)?;
            Ok(AblationRow {
                name: spec.name.clone(),
                auc: auc(&probs, test.1)?,
            })
        })
        .collect()
}
