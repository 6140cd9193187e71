use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Fixed unit vector the hidden state is projected onto.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDirection {
    v: Vec<f64>,
    seed: Option<u64>,
}

impl ProbeDirection {
    /// Uniformly random direction on the unit sphere in `dim` dimensions.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("probe dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "probe", dim as u64));
        loop {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(mut p) = Self::from_vector(raw) {
                p.seed = Some(seed);
                return Ok(p);
            }
        }
    }

    /// `v / ||v||`.
    pub fn from_vector(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::Input("probe direction needs a finite non-zero vector".into()));
        }
        Ok(Self {
            v: v.into_iter().map(|x| x / norm).collect(),
            seed: None,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `h . v`
    pub fn project(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.v.len() {
            return Err(Error::Contract(format!(
                "hidden state has {} dims, probe has {}",
                h.len(),
                self.v.len()
            )));
        }
        Ok(h.iter().zip(&self.v).map(|(a, b)| a * b).sum())
    }
}
