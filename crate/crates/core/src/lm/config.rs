use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the decoder-only transformer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub rng_seed: u64,
}

impl ModelConfig {
    /// Two-layer, 64-wide default used by the experiment harness.
    pub fn small(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            model_dim: 64,
            n_layers: 2,
            n_heads: 4,
            ffn_dim: 256,
            max_seq_len: 32,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("model_dim", self.model_dim),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Input(format!("model config: {name} must be positive")));
        }
        if self.vocab_size < 2 {
            return Err(Error::Input(format!(
                "model config: vocab_size must be at least 2, got {}",
                self.vocab_size
            )));
        }
        if self.model_dim % self.n_heads != 0 {
            return Err(Error::Input(format!(
                "model config: model_dim {} is not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }
}
