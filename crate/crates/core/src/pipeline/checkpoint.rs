//! Versioned binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes  "OSEGCKPT"
//! version          u32      = 1
//! config           u64 length + UTF-8 JSON of the pipeline config
//! iteration        u64
//! params           tensor set
//! optimizer        f64 beta1, f64 beta2, f64 eps, f64 weight_decay,
//!                  u64 step, tensor set m, tensor set v
//! ema              f64 alpha, u64 updates, u8 has_shadow,
//!                  tensor set shadow (only when has_shadow = 1)
//! digest           32 bytes SHA-256 of everything above
//!
//! tensor set       u32 count, then per tensor:
//!                  u32 name length, name bytes, u32 rank, u64 dims[rank],
//!                  f64 values[product(dims)]
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{Param, ParamSet};
use crate::optimization::{AdamWConfig, EmaState, OptimizerState};

pub const MAGIC: &[u8; 8] = b"OSEGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: PipelineConfig,
    pub iteration: u64,
    pub params: ParamSet,
    pub optimizer: OptimizerState,
    pub ema: EmaState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.config)?;
        w.extend_from_slice(&(config.len() as u64).to_le_bytes());
        w.extend_from_slice(&config);
        w.extend_from_slice(&self.iteration.to_le_bytes());
        write_set(&mut w, &self.params);

        let o = &self.optimizer;
        for v in [o.config.beta1, o.config.beta2, o.config.eps, o.config.weight_decay] {
            w.extend_from_slice(&v.to_le_bytes());
        }
        w.extend_from_slice(&o.step.to_le_bytes());
        write_set(&mut w, &o.m);
        write_set(&mut w, &o.v);

        w.extend_from_slice(&self.ema.alpha().to_le_bytes());
        w.extend_from_slice(&self.ema.updates().to_le_bytes());
        match self.ema.shadow() {
            Some(shadow) => {
                w.push(1);
                write_set(&mut w, shadow);
            }
            None => w.push(0),
        }
        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("digest mismatch (truncated or corrupt file)".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let len = r.u64()? as usize;
        let config: PipelineConfig = serde_json::from_slice(r.take(len)?)?;
        let iteration = r.u64()?;
        let params = read_set(&mut r)?;

        let opt_cfg = AdamWConfig {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            weight_decay: r.f64()?,
        };
        let step = r.u64()?;
        let m = read_set(&mut r)?;
        let v = read_set(&mut r)?;
        params.check_layout(&m)?;
        params.check_layout(&v)?;

        let alpha = r.f64()?;
        let updates = r.u64()?;
        let shadow = match r.take(1)?[0] {
            0 => None,
            1 => {
                let s = read_set(&mut r)?;
                params.check_layout(&s)?;
                Some(s)
            }
            other => return Err(Error::Checkpoint(format!("bad EMA flag {other}"))),
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                body.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config,
            iteration,
            params,
            optimizer: OptimizerState {
                config: opt_cfg,
                step,
                m,
                v,
            },
            ema: EmaState::from_parts(alpha, shadow, updates)?,
        })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn write_set(w: &mut Vec<u8>, set: &ParamSet) {
    w.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for p in set.iter() {
        w.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        w.extend_from_slice(p.name.as_bytes());
        w.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            w.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &p.data {
            w.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_set(r: &mut Reader) -> Result<ParamSet> {
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(Param { name, shape, data });
    }
    Ok(ParamSet::new(params))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
