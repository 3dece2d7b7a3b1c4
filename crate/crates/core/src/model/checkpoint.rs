//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field        | type                 |
//! |--------------|----------------------|
//! | magic        | 8 bytes `FSQRCKPT`   |
//! | version      | u32 (currently 1)    |
//! | dim count n  | u32                  |
//! | dims         | n × u64              |
//! | leaky slope  | f64                  |
//! | per layer    | weights (out × in, row-major) as f64, then bias (out) as f64 |
//! | config bytes | u64 length, then UTF-8 text |
//!
//! The trailing text is the resolved configuration that produced the model.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::mlp::{DenseLayer, MlpParams};

pub const MAGIC: &[u8; 8] = b"FSQRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub config: String,
}

pub fn encode(params: &MlpParams, config: &str) -> Vec<u8> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(32 + 8 * (dims.len() + params.num_params()) + config.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    out.extend_from_slice(&params.leaky_slope.to_le_bytes());
    for v in params.flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = c.u32()? as usize;
    if n < 2 {
        return Err(format!("{n} dims recorded, need at least 2"));
    }
    let dims = (0..n)
        .map(|_| c.u64().map(|d| d as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if dims.contains(&0) {
        return Err(format!("zero-sized layer in dims {dims:?}"));
    }
    let leaky_slope = c.f64()?;
    let mut layers = Vec::with_capacity(n - 1);
    for w in dims.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = (0..inputs * outputs).map(|_| c.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let bias = (0..outputs).map(|_| c.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        layers.push(DenseLayer { inputs, outputs, weights, bias });
    }
    let len = c.u64()? as usize;
    let config = String::from_utf8(c.take(len)?.to_vec()).map_err(|e| e.to_string())?;
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(Checkpoint { params: MlpParams { layers, leaky_slope }, config })
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &MlpParams, config: &str) -> Result<()> {
    fs::write(path.as_ref(), encode(params, config))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: if e.kind() == std::io::ErrorKind::NotFound {
            "checkpoint not found (run `train` first)".into()
        } else {
            e.to_string()
        },
    })?;
    decode(&bytes).map_err(|message| Error::Checkpoint { path: path.to_path_buf(), message })
}
