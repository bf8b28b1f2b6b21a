//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "EBTLCKPT"
//! version  u32 LE
//! meta_len u64 LE, then meta_len bytes of TOML metadata
//! count    u32 LE, then per tensor:
//!   name_len u32 LE, name bytes (UTF-8)
//!   ndim u32 LE, ndim x u64 LE dims
//!   product(dims) x f64 LE
//! sha256   32 bytes over everything above
//! ```

use std::path::Path;

use ebtl_core::energy::TauTable;
use ebtl_core::policy::{ActorCriticParams, Architecture, Encoder};
use ebtl_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EBTLCKPT";
pub const VERSION: u32 = 1;
const CALIBRATION: &str = "calibration.scores";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub steps: u64,
    pub config_hash: String,
    pub energy_regularized: bool,
    pub temperature: f64,
    /// `(quantile, threshold)` pairs.
    pub tau_table: Vec<(f64, f64)>,
    pub eval_return: Option<f64>,
    pub arch: ArchMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchMeta {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub hidden: Vec<usize>,
    /// `[channels, height, width]` and filter counts when convolutional.
    pub conv_input: Option<[usize; 3]>,
    pub conv_filters: Option<Vec<usize>>,
}

impl ArchMeta {
    pub fn from_arch(a: &Architecture) -> Self {
        match &a.encoder {
            Encoder::Dense { hidden } => Self {
                obs_dim: a.obs_dim,
                num_actions: a.num_actions,
                hidden: hidden.clone(),
                conv_input: None,
                conv_filters: None,
            },
            Encoder::Conv { channels, height, width, filters, hidden } => Self {
                obs_dim: a.obs_dim,
                num_actions: a.num_actions,
                hidden: vec![*hidden],
                conv_input: Some([*channels, *height, *width]),
                conv_filters: Some(filters.clone()),
            },
        }
    }

    pub fn to_arch(&self) -> Result<Architecture> {
        let encoder = match (&self.conv_input, &self.conv_filters) {
            (None, None) => Encoder::Dense { hidden: self.hidden.clone() },
            (Some([c, h, w]), Some(f)) if self.hidden.len() == 1 => {
                Encoder::Conv { channels: *c, height: *h, width: *w, filters: f.clone(), hidden: self.hidden[0] }
            }
            _ => return Err(Error::Malformed("inconsistent architecture metadata".into())),
        };
        let a = Architecture { obs_dim: self.obs_dim, num_actions: self.num_actions, encoder };
        a.validate()?;
        Ok(a)
    }
}

/// A frozen policy together with its energy calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ActorCriticParams,
    /// Energy scores of the training states used for calibration.
    pub calibration: Vec<f64>,
}

impl Checkpoint {
    pub fn tau_table(&self) -> TauTable {
        TauTable::from_parts(self.meta.tau_table.clone(), self.calibration.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = toml::to_string(&self.meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let calibration = Tensor::vector(self.calibration.clone());
        let tensors: Vec<(&str, &Tensor)> = self
            .params
            .names()
            .iter()
            .map(String::as_str)
            .zip(self.params.tensors())
            .chain(std::iter::once((CALIBRATION, &calibration)))
            .collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut r = Reader { bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion { found: version, expected: VERSION });
        }
        if bytes.len() < 32 + r.pos {
            return Err(Error::Malformed("missing checksum".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Corrupt);
        }
        let mut r = Reader { bytes: body, pos: r.pos };
        let meta_len = r.u64()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?).map_err(|e| Error::Malformed(e.to_string()))?;
        let meta: CheckpointMeta = toml::from_str(meta_text).map_err(|e| Error::Malformed(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut named = Vec::with_capacity(count);
        let mut calibration = None;
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|e| Error::Malformed(e.to_string()))?.to_string();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Malformed("size overflow".into()))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Malformed("size overflow".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(shape, data)?;
            if name == CALIBRATION {
                calibration = Some(t.into_data());
            } else {
                named.push((name, t));
            }
        }
        if r.pos != body.len() {
            return Err(Error::Malformed("trailing bytes".into()));
        }
        let arch = meta.arch.to_arch()?;
        for ((name, expected), (got_name, t)) in arch.layout().iter().zip(&named) {
            if name == got_name && expected.as_slice() != t.shape() {
                return Err(Error::TensorShape { name: name.clone(), found: t.shape().to_vec(), expected: expected.clone() });
            }
        }
        let params = ActorCriticParams::from_named(arch, named)?;
        Ok(Self { meta, params, calibration: calibration.unwrap_or_default() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Malformed("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
