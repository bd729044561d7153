//! Binary model checkpoints.
//!
//! Little-endian: magic `"SEEG"`, version u32, the model config as
//! `C T L F1 D F2 N` (u32 each) followed by `dropout celu_alpha
//! sampling_rate init_std_hz` (f64 each), then every parameter tensor in
//! build order as a u32 length and that many f64 values.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::network::{count_parameters, Model, ModelConfig, ModelError};

pub const MAGIC: &[u8; 4] = b"SEEG";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected \"SEEG\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("{0} trailing bytes after the last parameter")]
    TrailingBytes(usize),
    #[error("checkpoint holds {actual} parameters but its config needs {expected}")]
    Count { expected: usize, actual: usize },
    #[error("invalid checkpoint contents: {0}")]
    Model(#[from] ModelError),
}

pub fn encode(model: &Model) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(64 + 8 * model.parameter_count() + 4 * model.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.channels,
        c.samples,
        c.sinc_len,
        c.sinc_filters,
        c.depth,
        c.pointwise_filters,
        c.classes,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [c.dropout, c.celu_alpha, c.sampling_rate, c.init_std_hz] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in model.params() {
        out.extend_from_slice(&(p.value.len() as u32).to_le_bytes());
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let end = self.pos + N;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated { offset: self.pos })?;
        self.pos = end;
        Ok(s.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        self.take().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        self.take().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model, CheckpointError> {
    let mut r = Cursor { bytes, pos: 0 };
    let magic = r.take::<4>()?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let [channels, samples, sinc_len, sinc_filters, depth, pointwise_filters, classes] = dims;
    let config = ModelConfig {
        channels,
        samples,
        sinc_len,
        sinc_filters,
        depth,
        pointwise_filters,
        classes,
        dropout: r.f64()?,
        celu_alpha: r.f64()?,
        sampling_rate: r.f64()?,
        init_std_hz: r.f64()?,
    };
    config.validate()?;
    let expected = count_parameters(&config).total;
    let mut values = Vec::new();
    let mut actual = 0usize;
    while r.pos < bytes.len() {
        let n = r.u32()? as usize;
        actual += n;
        if actual > expected {
            return Err(CheckpointError::Count { expected, actual });
        }
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.f64()?);
        }
        values.push(v);
        if actual == expected {
            break;
        }
    }
    if actual != expected {
        return Err(CheckpointError::Count { expected, actual });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(Model::from_parts(config, values)?)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    decode(&fs::read(path)?)
}
