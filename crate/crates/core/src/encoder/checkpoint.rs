//! `ELEN` checkpoint files.
//!
//! ```text
//! "ELEN" | version u32 | header_len u32 | header JSON {"config", "meta"}
//! | n_tensors u32
//! | per tensor: name_len u32 | name | dtype u8 | ndim u32 | dims u64×ndim
//!               | offset u64 | nbytes u64
//! | tensor data (little-endian), offsets relative to its start
//! ```
//!
//! The model tensors come first in canonical order, followed by any extra
//! named tensors (optimizer moments, for instance).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DType, Real, Tensor};

use super::config::EncoderConfig;
use super::params::{param_shapes, ParamSet};

pub const ELEN_MAGIC: &[u8; 4] = b"ELEN";
pub const ELEN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: EncoderConfig,
    pub params: ParamSet<T>,
    pub extra: Vec<(String, Tensor<T>)>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    #[serde(default)]
    meta: serde_json::Value,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(config: EncoderConfig, params: ParamSet<T>) -> Self {
        Checkpoint {
            config,
            params,
            extra: Vec::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_shapes(&self.config)?;
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            meta: self.meta.clone(),
        })?;
        let tensors: Vec<(String, &Tensor<T>)> = self
            .params
            .named()
            .into_iter()
            .chain(self.extra.iter().map(|(n, t)| (n.clone(), t)))
            .collect();

        let mut out = Vec::new();
        out.extend_from_slice(ELEN_MAGIC);
        out.extend_from_slice(&ELEN_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::DTYPE.code());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &dim in &t.shape {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            let nbytes = (t.len() * T::DTYPE.size()) as u64;
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&nbytes.to_le_bytes());
            offset += nbytes;
        }
        out.reserve(offset as usize);
        for (_, t) in &tensors {
            for &v in &t.data {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != ELEN_MAGIC {
            return Err(Error::Format("not an ELEN checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != ELEN_VERSION {
            return Err(Error::Format(format!("unsupported ELEN version {version}")));
        }
        let hlen = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
        header.config.validate()?;
        let count = r.u32()? as usize;
        let mut index = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let dtype = DType::from_code(r.take(1)?[0])
                .ok_or_else(|| Error::Format(format!("{name}: unknown dtype")))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let offset = r.u64()? as usize;
            let nbytes = r.u64()? as usize;
            let expect = shape
                .iter()
                .try_fold(dtype.size(), |acc: usize, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("{name}: shape overflows")))?;
            if nbytes != expect {
                return Err(Error::Format(format!("{name}: byte length does not match shape")));
            }
            index.push((name, dtype, shape, offset, nbytes));
        }
        let data = &bytes[r.pos..];
        let total: usize = index.iter().map(|e| e.4).sum();
        if data.len() != total {
            return Err(Error::Format(format!(
                "tensor data is {} bytes, index describes {total}",
                data.len()
            )));
        }
        let mut tensors = Vec::with_capacity(index.len());
        for (name, dtype, shape, offset, nbytes) in index {
            let raw = offset
                .checked_add(nbytes)
                .and_then(|end| data.get(offset..end))
                .ok_or_else(|| Error::Format(format!("{name}: data out of range")))?;
            let values: Vec<T> = match dtype {
                d if d == T::DTYPE => raw.chunks_exact(d.size()).map(T::read_le).collect(),
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| T::lit(f32::read_le(c) as f64))
                    .collect(),
                DType::F64 => raw.chunks_exact(8).map(|c| T::lit(f64::read_le(c))).collect(),
            };
            tensors.push((name, Tensor::from_vec(&shape, values)));
        }

        let n_model = param_shapes(&header.config).len();
        if tensors.len() < n_model {
            return Err(Error::Format("checkpoint is missing model tensors".into()));
        }
        let extra = tensors.split_off(n_model);
        for ((expect, _), (got, _)) in param_shapes(&header.config).iter().zip(&tensors) {
            if expect != got {
                return Err(Error::Format(format!("expected tensor {expect}, found {got}")));
            }
        }
        let params = ParamSet::from_tensors(&header.config, tensors.into_iter().map(|t| t.1).collect())?;
        Ok(Checkpoint {
            config: header.config,
            params,
            extra,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
