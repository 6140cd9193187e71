use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, Direction, ModelParams};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// A prompt and the single next token it should produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub target: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Index of the first epoch to run. Shuffles depend only on `(seed, epoch)`,
    /// so resuming at epoch `k` continues a run exactly.
    pub start_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub start_epoch: usize,
    /// Mean per-example loss over each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    pub n_examples: usize,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Batch-size-one SGD descent over the examples, reshuffled every epoch.
pub fn train(params: &mut ModelParams, examples: &[Example], opts: &TrainOptions) -> Result<TrainingLog> {
    if examples.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if opts.epochs == 0 {
        return Err(Error::Input("epochs must be at least 1".into()));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::Input(format!("learning rate must be positive, got {}", opts.lr)));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainingLog {
        start_epoch: opts.start_epoch,
        epoch_losses: Vec::with_capacity(opts.epochs),
        n_examples: examples.len(),
    };
    for epoch in opts.start_epoch..opts.start_epoch + opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "train-shuffle", epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = &examples[i];
            let (loss, grads) = loss_and_grad(params, &ex.tokens, ex.target).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence {
                    epoch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            total += loss;
            params.sgd_step(&grads, opts.lr, Direction::Descent)?;
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() || params.iter().any(|(_, t)| !t.is_finite()) {
            return Err(Error::Divergence { epoch, loss: mean });
        }
        log.epoch_losses.push(mean);
    }
    Ok(log)
}

/// Mean loss over the examples without updating anything.
pub fn mean_loss(params: &ModelParams, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("no examples".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let trace = super::forward(params, &ex.tokens)?;
        total += crate::autodiff::cross_entropy(trace.logits.data(), ex.target)?;
    }
    Ok(total / examples.len() as f64)
}
