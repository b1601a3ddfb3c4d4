//! Versioned named-array container: magic, format version, the detector
//! configuration as JSON, then every parameter array as little-endian f64.

use std::path::Path;

use super::config::DetectorConfig;
use super::model::Detector;
use crate::error::{Error, Result};
use crate::nn::{NamedArray, ParamSet};
use crate::util::{sha256_hex, write_atomic};

const MAGIC: &[u8; 8] = b"FSDCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: DetectorConfig,
    pub params: ParamSet,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Config("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
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

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for a in self.params.iter() {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for d in &a.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and validates parameter names and shapes against the embedded
    /// configuration.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Config("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let config: DetectorConfig = serde_json::from_slice(r.take(n)?)
            .map_err(|e| Error::Config(format!("bad checkpoint config: {e}")))?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Config("non-utf8 parameter name".into()))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Config("oversized array".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != buf.len() {
            return Err(Error::Config("trailing bytes after checkpoint".into()));
        }
        let ckpt = Self {
            config,
            params: ParamSet::from_arrays(arrays)?,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Checks that the parameter names and shapes are exactly those the
    /// configuration builds.
    pub fn validate(&self) -> Result<()> {
        let reference = Detector::new(&self.config)?.init_params(0)?;
        check_compatible(&reference, &self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

/// Checks that `params` has exactly the names and shapes of `reference`.
pub fn check_compatible(reference: &ParamSet, params: &ParamSet) -> Result<()> {
    if reference.len() != params.len() {
        return Err(Error::Config(format!(
            "checkpoint holds {} arrays, configuration expects {}",
            params.len(),
            reference.len()
        )));
    }
    for a in reference.iter() {
        let b = params.get(&a.name)?;
        if a.shape != b.shape {
            return Err(Error::Config(format!(
                "parameter {} has shape {:?}, configuration expects {:?}",
                a.name, b.shape, a.shape
            )));
        }
    }
    Ok(())
}
