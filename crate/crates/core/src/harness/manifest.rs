use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{sha256_file, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file written by a command, relative to the run directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    /// Hash of the configuration that produced it.
    pub config_hash: String,
}

/// Index of a run directory: which artifacts exist, their checksums, and the
/// configuration and tool version behind them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub artifacts: BTreeMap<String, Artifact>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        let t = now();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            created_unix: t,
            updated_unix: t,
            artifacts: BTreeMap::new(),
        }
    }

    /// Loads `dir/manifest.json`, or starts a new one if there is none.
    pub fn open(dir: &Path, config_hash: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config_hash));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "manifest",
            detail: e.to_string(),
        })?;
        m.config_hash = config_hash.to_string();
        Ok(m)
    }

    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.updated_unix = now();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Records `dir/rel` under `name` with its current checksum.
    pub fn record(&mut self, dir: &Path, name: &str, rel: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(rel))?;
        self.artifacts.insert(
            name.to_string(),
            Artifact {
                path: PathBuf::from(rel),
                sha256,
                config_hash: self.config_hash.clone(),
            },
        );
        Ok(())
    }

    /// Path of artifact `name`, after checking that the file still matches
    /// its recorded checksum.
    pub fn verified(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let a = self
            .artifacts
            .get(name)
            .ok_or_else(|| Error::Input(format!("run has no {name}; run the command that produces it first")))?;
        let path = dir.join(&a.path);
        if !path.exists() {
            return Err(Error::Integrity(format!("{name} missing at {}", path.display())));
        }
        let actual = sha256_file(&path)?;
        if actual != a.sha256 {
            return Err(Error::Integrity(format!(
                "{name} at {} has checksum {actual}, manifest records {}",
                path.display(),
                a.sha256
            )));
        }
        Ok(path)
    }

    /// Checks every recorded artifact.
    pub fn verify_all(&self, dir: &Path) -> Result<()> {
        for name in self.artifacts.keys() {
            self.verified(dir, name)?;
        }
        Ok(())
    }
}
