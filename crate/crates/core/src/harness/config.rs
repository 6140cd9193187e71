use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::DEFAULT_ETA;
use crate::classifier::{DEFAULT_FOLDS, DEFAULT_LAMBDA_GRID};
use crate::corpus::{DEFAULT_FRACTIONS, DEFAULT_FUTURE_FRACTION};
use crate::error::{Error, Result};
use crate::fsutil::sha256_hex;
use crate::lm::ModelConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_facts: usize,
    pub n_members: usize,
    pub n_nonmembers: usize,
    /// Share of non-members drawn from held-out facts; the rest are
    /// counterfactual answers to member questions.
    pub future_fraction: f64,
    pub fractions: [f64; 3],
}

/// Architecture minus the vocabulary size, which follows the tokenizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub model_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub init_seed: u64,
}

/// Which member samples the target model is fine-tuned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainOn {
    /// Every member, whatever its evaluation split.
    AllMembers,
    /// Members of the train split only. Validation and test members are then
    /// unseen by the model.
    TrainSplitMembers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Mean member loss below which the run counts as memorised.
    pub loss_threshold: f64,
    pub train_on: TrainOn,
    /// Also train on every other phrasing of each chosen member's fact, so
    /// the model learns the fact rather than one sentence.
    pub all_templates: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub eta: f64,
    pub probe_seed: u64,
    pub k_percents: Vec<f64>,
    pub n_neighbours: usize,
    pub neighbour_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// FPR levels at which TPR is reported.
    pub fpr_levels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    /// Number of member facts with a counterfactual to probe.
    pub n_facts: usize,
    /// Paraphrases per fact.
    pub k: usize,
}

/// Everything a run depends on. Every random stream has an explicit seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub output_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub model: ModelSection,
    pub training: TrainingConfig,
    pub attack: AttackConfig,
    pub classifier: ClassifierConfig,
    pub consistency: ConsistencyConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults with every seed set to `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let m = ModelConfig::small(2);
        Self {
            version: CONFIG_VERSION,
            output_dir: PathBuf::from(format!("runs/seed-{seed}")),
            corpus: CorpusConfig {
                seed,
                n_facts: 1000,
                n_members: 500,
                n_nonmembers: 500,
                future_fraction: DEFAULT_FUTURE_FRACTION,
                fractions: DEFAULT_FRACTIONS,
            },
            model: ModelSection {
                model_dim: m.model_dim,
                n_layers: m.n_layers,
                n_heads: m.n_heads,
                ffn_dim: m.ffn_dim,
                max_seq_len: m.max_seq_len,
                init_seed: seed,
            },
            training: TrainingConfig {
                epochs: 15,
                lr: 0.01,
                seed,
                loss_threshold: 0.5,
                train_on: TrainOn::AllMembers,
                all_templates: true,
            },
            attack: AttackConfig {
                eta: DEFAULT_ETA,
                probe_seed: seed,
                k_percents: vec![10.0, 20.0],
                n_neighbours: 25,
                neighbour_seed: seed,
            },
            classifier: ClassifierConfig {
                lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
                folds: DEFAULT_FOLDS,
                seed,
                fpr_levels: vec![0.01, 0.05, 0.1],
            },
            consistency: ConsistencyConfig { n_facts: 20, k: 3 },
        }
    }

    /// Sets every seed to `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.corpus.seed = seed;
        self.model.init_seed = seed;
        self.training.seed = seed;
        self.attack.probe_seed = seed;
        self.attack.neighbour_seed = seed;
        self.classifier.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(format!("config: {m}")));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported version {}, expected {CONFIG_VERSION}", self.version));
        }
        let f = &self.corpus.fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions must be in [0, 1] and sum to 1, got {f:?}"));
        }
        if !(0.0..=1.0).contains(&self.corpus.future_fraction) {
            return bad(format!("future_fraction must lie in [0, 1], got {}", self.corpus.future_fraction));
        }
        if !(self.attack.eta > 0.0 && self.attack.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.attack.eta));
        }
        if self.attack.k_percents.iter().any(|k| !(*k > 0.0 && *k <= 100.0)) {
            return bad(format!("k percents must lie in (0, 100], got {:?}", self.attack.k_percents));
        }
        if self.attack.n_neighbours == 0 {
            return bad("n_neighbours must be at least 1".into());
        }
        if self.training.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.training.lr > 0.0 && self.training.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.training.lr));
        }
        if self.classifier.lambda_grid.is_empty() || self.classifier.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return bad("lambda_grid must be non-empty and non-negative".into());
        }
        if self.classifier.fpr_levels.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return bad("fpr_levels must lie in [0, 1]".into());
        }
        if self.consistency.k < 2 {
            return bad("consistency k must be at least 2".into());
        }
        self.model_config(2)?;
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let c = ModelConfig {
            vocab_size,
            model_dim: self.model.model_dim,
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            ffn_dim: self.model.ffn_dim,
            max_seq_len: self.model.max_seq_len,
            rng_seed: self.model.init_seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            what: "config",
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical TOML form, excluding the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Ok(sha256_hex(c.to_toml()?.as_bytes()))
    }

    /// Overrides one key given as `section.key=value` (or `key=value` for a
    /// top-level key). The value is read as a TOML literal, falling back to a
    /// bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("override {assignment:?} is not key=value")))?;
        let value = parse_value(raw.trim());
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::Input(format!("config: {e}")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields one item");
        let mut table = &mut root;
        for p in parents {
            table = table
                .get_mut(*p)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::Input(format!("unknown config section {p:?} in {key:?}")))?;
        }
        if !table.contains_key(*last) {
            return Err(Error::Input(format!("unknown config key {key:?}")));
        }
        table.insert(last.to_string(), value);
        let text = toml::to_string(&root).map_err(|e| Error::Input(format!("config: {e}")))?;
        let updated: Self = toml::from_str(&text).map_err(|e| Error::Input(format!("override {key:?}: {e}")))?;
        *self = updated;
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
