//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each primitive checks its
//! input shapes, refuses to produce NaN or infinity, and records what its
//! backward rule needs. Broadcasting is limited to adding a bias vector to
//! every row of a matrix.

mod graph;
mod tensor;

pub use graph::{GradientSet, Graph, NodeId};
pub use tensor::Tensor;

pub(crate) use graph::{log_sum_exp, nll};

use crate::error::{Error, Result};

/// Cross-entropy of a logit vector against `target`, without building a graph.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Index(format!(
            "cross_entropy: target {target} with vocabulary {}",
            logits.len()
        )));
    }
    Ok(nll(logits, target))
}

/// Log-probabilities of a logit vector.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| z - lse).collect()
}
