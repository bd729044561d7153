//! The `EEGT` v1 trial container.
//!
//! Little-endian throughout. A 28-byte header
//!
//! ```text
//! offset  size  field
//!      0     4  magic "EEGT"
//!      4     4  version (u32) = 1
//!      8     4  n_trials (u32)
//!     12     4  C (u32)
//!     16     4  T (u32)
//!     20     4  fs (f32)
//!     24     4  label_count (u32)
//! ```
//!
//! is followed by `n_trials` records of `label u8, subject u8, session u8`
//! and `C * T` f32 samples, channel-major.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Trial, TrialSet};

pub const MAGIC: &[u8; 4] = b"EEGT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;
pub const TAG_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at byte 0: expected \"EEGT\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {found} at byte 4 (expected {VERSION})")]
    BadVersion { found: u32 },
    #[error("truncated at byte {offset}: need {needed} bytes, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("{extra} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("invalid header at byte {offset}: {msg}")]
    Header { offset: usize, msg: String },
    #[error("trial {index} at byte {offset}: label {label} >= label_count {label_count}")]
    Label {
        index: usize,
        offset: usize,
        label: u8,
        label_count: usize,
    },
    #[error("cannot encode trial set: {0}")]
    Encode(String),
}

fn record_len(channels: usize, samples: usize) -> usize {
    TAG_LEN + channels * samples * 4
}

pub fn encode(set: &TrialSet) -> Result<Vec<u8>, ContainerError> {
    set.validate().map_err(|e| ContainerError::Encode(e.to_string()))?;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| ContainerError::Encode(format!("{what} = {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + set.len() * record_len(set.channels, set.samples));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(set.len(), "n_trials")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.channels, "C")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.samples, "T")?.to_le_bytes());
    out.extend_from_slice(&(set.fs as f32).to_le_bytes());
    out.extend_from_slice(&to_u32(set.classes, "label_count")?.to_le_bytes());
    for t in &set.trials {
        out.extend_from_slice(&[t.label, t.subject, t.session]);
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.bytes.len() - self.pos < n {
            return Err(ContainerError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ContainerError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrialSet, ContainerError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic { found: magic });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ContainerError::BadVersion { found: version });
    }
    let n_trials = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let samples = r.u32()? as usize;
    let fs = r.f32()?;
    let label_count = r.u32()? as usize;
    if channels == 0 || samples == 0 {
        return Err(ContainerError::Header {
            offset: 12,
            msg: format!("C = {channels} and T = {samples} must be positive"),
        });
    }
    if label_count < 2 {
        return Err(ContainerError::Header {
            offset: 24,
            msg: format!("label_count = {label_count} must be at least 2"),
        });
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(ContainerError::Header {
            offset: 20,
            msg: format!("fs = {fs} must be positive"),
        });
    }
    let expected = n_trials
        .checked_mul(record_len(channels, samples))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| ContainerError::Header {
            offset: 8,
            msg: "payload size overflows".into(),
        })?;
    if bytes.len() < expected {
        // report the offset of the first incomplete record
        let rec = record_len(channels, samples);
        let complete = (bytes.len() - HEADER_LEN) / rec;
        return Err(ContainerError::Truncated {
            offset: HEADER_LEN + complete * rec,
            needed: rec,
            len: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(ContainerError::TrailingBytes {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }
    let mut trials = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let offset = r.pos;
        let tag = r.take(TAG_LEN)?;
        let (label, subject, session) = (tag[0], tag[1], tag[2]);
        if label as usize >= label_count {
            return Err(ContainerError::Label {
                index,
                offset,
                label,
                label_count,
            });
        }
        let mut data = Vec::with_capacity(channels * samples);
        for _ in 0..channels * samples {
            data.push(r.f32()? as f64);
        }
        trials.push(Trial {
            data,
            label,
            subject,
            session,
        });
    }
    Ok(TrialSet {
        fs: fs as f64,
        channels,
        samples,
        classes: label_count,
        trials,
    })
}

pub fn write_container(set: &TrialSet, path: impl AsRef<Path>) -> Result<(), ContainerError> {
    fs::write(path, encode(set)?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<TrialSet, ContainerError> {
    decode(&fs::read(path)?)
}
