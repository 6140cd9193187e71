//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size        field
//! 0       8           magic  b"GDRIFTCK"
//! 8       4           format version (u32) = 1
//! 12      7 x 8       vocab_size, model_dim, n_layers, n_heads, ffn_dim,
//!                     max_seq_len, rng_seed (u64 each)
//! 68      8           trained_epochs (u64)
//! 76      4           tensor count (u32)
//! ...                 per tensor, in ascending name order:
//!                       name length (u32), name (UTF-8),
//!                       rank (u32), dims (u64 x rank),
//!                       values (f64 x product(dims))
//! end-32  32          SHA-256 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GDRIFTCK";
pub const FORMAT_VERSION: u32 = 1;

/// Parameters plus the number of epochs already trained, for resuming.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub trained_epochs: u64,
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let cfg = ckpt.params.config();
    let mut buf = Vec::with_capacity(128 + ckpt.params.num_parameters() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        cfg.vocab_size as u64,
        cfg.model_dim as u64,
        cfg.n_layers as u64,
        cfg.n_heads as u64,
        cfg.ffn_dim as u64,
        cfg.max_seq_len as u64,
        cfg.rng_seed,
        ckpt.trained_epochs,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tensors: Vec<_> = ckpt.params.iter().collect();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("dimension does not fit in usize"))
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(bad("file too short"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checkpoint checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        vocab_size: r.usize()?,
        model_dim: r.usize()?,
        n_layers: r.usize()?,
        n_heads: r.usize()?,
        ffn_dim: r.usize()?,
        max_seq_len: r.usize()?,
        rng_seed: r.u64()?,
    };
    let trained_epochs = r.u64()?;
    let count = r.u32()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("tensor size overflows"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("tensor size overflows"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| bad(format!("{name}: {e}")))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    Ok(Checkpoint {
        params: ModelParams::from_tensors(config, tensors)?,
        trained_epochs,
    })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    crate::fsutil::write_atomic(path, &encode(ckpt))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
