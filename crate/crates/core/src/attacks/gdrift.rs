use serde::{Deserialize, Serialize};

use super::ProbeDirection;
use crate::autodiff::{cross_entropy, GradientSet};
use crate::error::{Error, Result};
use crate::lm::{self, Direction, ForwardTrace, ModelParams, ParamSnapshot};

/// Ascent step size used unless configured otherwise.
pub const DEFAULT_ETA: f64 = 1e-2;

/// Column names of the feature vector, in order.
pub const FEATURE_NAMES: [&str; 7] = [
    "loss_before",
    "logit_before",
    "proj_before",
    "loss_after",
    "logit_after",
    "proj_after",
    "hidden_drift",
];

/// Measurements before and after one ascent step on a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFeatures {
    pub loss_before: f64,
    pub logit_before: f64,
    pub proj_before: f64,
    pub loss_after: f64,
    pub logit_after: f64,
    pub proj_after: f64,
    pub hidden_drift: f64,
}

impl DriftFeatures {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.loss_before,
            self.logit_before,
            self.proj_before,
            self.loss_after,
            self.logit_after,
            self.proj_after,
            self.hidden_drift,
        ]
    }

    pub fn from_array(f: [f64; 7]) -> Result<Self> {
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite drift feature in {f:?}")));
        }
        if f[6] < 0.0 {
            return Err(Error::Input(format!("hidden drift must be non-negative, got {}", f[6])));
        }
        Ok(Self {
            loss_before: f[0],
            logit_before: f[1],
            proj_before: f[2],
            loss_after: f[3],
            logit_after: f[4],
            proj_after: f[5],
            hidden_drift: f[6],
        })
    }

    pub fn loss_delta(&self) -> f64 {
        self.loss_after - self.loss_before
    }

    pub fn logit_delta(&self) -> f64 {
        self.logit_after - self.logit_before
    }

    pub fn proj_delta(&self) -> f64 {
        self.proj_after - self.proj_before
    }
}

/// Features plus the two hidden states they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftTrace {
    pub features: DriftFeatures,
    pub hidden_before: Vec<f64>,
    pub hidden_after: Vec<f64>,
}

/// What the drift probe needs from a model: a forward pass exposing logits and
/// the final hidden state, the gradient of the target cross-entropy, an
/// in-place ascent step, and exact snapshot and restore.
pub trait WhiteBoxModel {
    type Snapshot;

    fn trace(&self, tokens: &[usize]) -> Result<ForwardTrace>;
    fn target_grad(&self, tokens: &[usize], target: usize) -> Result<GradientSet>;
    fn ascend(&mut self, grads: &GradientSet, eta: f64) -> Result<()>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: &Self::Snapshot) -> Result<()>;
}

impl WhiteBoxModel for ModelParams {
    type Snapshot = ParamSnapshot;

    fn trace(&self, tokens: &[usize]) -> Result<ForwardTrace> {
        lm::forward(self, tokens)
    }

    fn target_grad(&self, tokens: &[usize], target: usize) -> Result<GradientSet> {
        Ok(lm::loss_and_grad(self, tokens, target)?.1)
    }

    fn ascend(&mut self, grads: &GradientSet, eta: f64) -> Result<()> {
        self.sgd_step(grads, eta, Direction::Ascent)
    }

    fn snapshot(&self) -> ParamSnapshot {
        ModelParams::snapshot(self)
    }

    fn restore(&mut self, snapshot: &ParamSnapshot) -> Result<()> {
        ModelParams::restore(self, snapshot)
    }
}

struct Reading {
    loss: f64,
    logit: f64,
    proj: f64,
    hidden: Vec<f64>,
}

fn read<M: WhiteBoxModel>(model: &M, tokens: &[usize], target: usize, probe: &ProbeDirection) -> Result<Reading> {
    let t = model.trace(tokens)?;
    let logits = t.logits.data();
    Ok(Reading {
        loss: cross_entropy(logits, target)?,
        logit: logits[target],
        proj: probe.project(t.hidden.data())?,
        hidden: t.hidden.into_data(),
    })
}

/// Drift features for one prompt and target token.
///
/// Reads loss, target logit and probe projection, takes one plain SGD ascent
/// step of size `eta` on the target cross-entropy, reads them again together
/// with the hidden-state displacement, and restores the model. The model is
/// restored even when a step fails; a failed restore is reported in place of
/// any other error.
pub fn gdrift_features<M: WhiteBoxModel>(
    model: &mut M,
    tokens: &[usize],
    target: usize,
    probe: &ProbeDirection,
    eta: f64,
) -> Result<DriftFeatures> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Input(format!("step size must be positive, got {eta}")));
    }
    Ok(gdrift_trace(model, tokens, target, probe, eta)?.features)
}

/// [`gdrift_features`] with the hidden states exposed. Also accepts
/// `eta == 0`, where the step is a no-op and the after-readings equal the
/// before-readings exactly.
pub fn gdrift_trace<M: WhiteBoxModel>(
    model: &mut M,
    tokens: &[usize],
    target: usize,
    probe: &ProbeDirection,
    eta: f64,
) -> Result<DriftTrace> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Input(format!("step size must be non-negative, got {eta}")));
    }
    let before = read(model, tokens, target, probe)?;
    let grads = model.target_grad(tokens, target)?;
    let saved = model.snapshot();
    let stepped = model.ascend(&grads, eta).and_then(|()| read(model, tokens, target, probe));
    model.restore(&saved)?;
    let after = stepped?;
    let hidden_drift = before
        .hidden
        .iter()
        .zip(&after.hidden)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    Ok(DriftTrace {
        features: DriftFeatures {
            loss_before: before.loss,
            logit_before: before.logit,
            proj_before: before.proj,
            loss_after: after.loss,
            logit_after: after.logit,
            proj_after: after.proj,
            hidden_drift,
        },
        hidden_before: before.hidden,
        hidden_after: after.hidden,
    })
}
