use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::autodiff::{GradientSet, Tensor};
use crate::error::{Error, Result};

const EMBED_STD: f64 = 0.1;

/// Named parameter tensors of the transformer, in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

/// Which way [`ModelParams::sgd_step`] moves along the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `theta - lr * grad`
    Descent,
    /// `theta + lr * grad`
    Ascent,
}

/// Deep copy of every parameter, tagged with its content checksum.
#[derive(Clone, Debug)]
pub struct ParamSnapshot {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
    checksum: String,
}

impl ParamSnapshot {
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }
}

pub(crate) fn layer_name(layer: usize, part: &str) -> String {
    format!("layers.{layer}.{part}")
}

/// Every parameter name with its shape, for a given architecture.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, f) = (config.vocab_size, config.model_dim, config.ffn_dim);
    let mut shapes = vec![
        ("tok_emb".to_string(), vec![v, d]),
        ("pos_emb".to_string(), vec![config.max_seq_len, d]),
    ];
    for l in 0..config.n_layers {
        for (part, shape) in [
            ("ln1.gamma", vec![d]),
            ("ln1.beta", vec![d]),
            ("attn.wq", vec![d, d]),
            ("attn.bq", vec![d]),
            ("attn.wk", vec![d, d]),
            ("attn.bk", vec![d]),
            ("attn.wv", vec![d, d]),
            ("attn.bv", vec![d]),
            ("attn.wo", vec![d, d]),
            ("attn.bo", vec![d]),
            ("ln2.gamma", vec![d]),
            ("ln2.beta", vec![d]),
            ("ffn.w1", vec![d, f]),
            ("ffn.b1", vec![f]),
            ("ffn.w2", vec![f, d]),
            ("ffn.b2", vec![d]),
        ] {
            shapes.push((layer_name(l, part), shape));
        }
    }
    shapes.push(("ln_f.gamma".to_string(), vec![d]));
    shapes.push(("ln_f.beta".to_string(), vec![d]));
    shapes.push(("out.w".to_string(), vec![d, v]));
    shapes.push(("out.b".to_string(), vec![v]));
    shapes
}

/// Deterministic initialisation: normal weights scaled by fan-in (residual
/// output projections further by depth), zero biases and layer-norm shifts,
/// unit layer-norm scales.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth_scale = 1.0 / ((2 * config.n_layers) as f64).sqrt();
    let mut tensors = BTreeMap::new();
    for (name, shape) in parameter_shapes(config) {
        let n: usize = shape.iter().product();
        let data = if name.ends_with("gamma") {
            vec![1.0; n]
        } else if shape.len() == 1 {
            vec![0.0; n]
        } else {
            let std = if name.ends_with("_emb") {
                EMBED_STD
            } else {
                let fan_in = shape[0] as f64;
                let residual = name.ends_with("attn.wo") || name.ends_with("ffn.w2");
                (1.0 / fan_in.sqrt()) * if residual { depth_scale } else { 1.0 }
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    Ok(ModelParams {
        config: config.clone(),
        tensors,
    })
}

impl ModelParams {
    /// Assembles parameters from named tensors, checking names and shapes
    /// against the architecture.
    pub fn from_tensors(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = parameter_shapes(&config);
        if expected.len() != tensors.len() {
            return Err(Error::Integrity(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (name, shape) in &expected {
            match tensors.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {
                    if !t.is_finite() {
                        return Err(Error::Integrity(format!("{name} holds non-finite values")));
                    }
                }
                Some(t) => {
                    return Err(Error::Integrity(format!(
                        "{name}: shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Integrity(format!("missing parameter {name}"))),
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// SHA-256 over names, shapes and the bit patterns of every value.
    pub fn checksum(&self) -> String {
        checksum_tensors(&self.tensors)
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            config: self.config.clone(),
            tensors: self.tensors.clone(),
            checksum: self.checksum(),
        }
    }

    /// Copies the snapshot back in place and verifies the result against the
    /// snapshot's checksum.
    pub fn restore(&mut self, snapshot: &ParamSnapshot) -> Result<()> {
        if snapshot.config != self.config {
            return Err(Error::Integrity("snapshot was taken from a different model config".into()));
        }
        if !snapshot.tensors.keys().eq(self.tensors.keys()) {
            return Err(Error::Integrity("snapshot parameter names differ from the model".into()));
        }
        for ((name, dst), src) in self.tensors.iter_mut().zip(snapshot.tensors.values()) {
            if dst.shape() != src.shape() {
                return Err(Error::Integrity(format!("{name}: snapshot shape differs")));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        let now = self.checksum();
        if now != snapshot.checksum {
            return Err(Error::Integrity(format!(
                "checksum after restore {now} != snapshot {}",
                snapshot.checksum
            )));
        }
        Ok(())
    }

    /// One plain SGD update in place.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64, direction: Direction) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Contract(format!("learning rate must be non-negative, got {lr}")));
        }
        if grads.len() != self.tensors.len() || !grads.names().eq(self.tensors.keys().map(String::as_str)) {
            return Err(Error::Contract("gradient names do not match the parameters".into()));
        }
        for ((name, t), (_, g)) in self.tensors.iter().zip(grads.iter()) {
            if t.shape() != g.shape() {
                return Err(Error::Contract(format!(
                    "{name}: gradient shape {:?} vs parameter {:?}",
                    g.shape(),
                    t.shape()
                )));
            }
        }
        let sign = match direction {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        };
        let step = sign * lr;
        for (t, (_, g)) in self.tensors.values_mut().zip(grads.iter()) {
            for (p, gi) in t.data_mut().iter_mut().zip(g.data()) {
                *p += step * gi;
            }
        }
        Ok(())
    }
}

pub(crate) fn checksum_tensors(tensors: &BTreeMap<String, Tensor>) -> String {
    let mut hasher = Sha256::new();
    let mut buf = Vec::new();
    for (name, t) in tensors {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        buf.clear();
        buf.reserve(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        hasher.update(&buf);
    }
    hex::encode(hasher.finalize())
}
