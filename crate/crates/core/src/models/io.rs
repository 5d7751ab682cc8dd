//! Model files: `TMOD` magic, u32 version, u64 header length, JSON header
//! (spec, layout, log, ensemble), u64 parameter count, then f64 parameters.
//! All integers little-endian.

use std::io::Write;
use std::path::Path;

use super::{EpochLog, TrainedModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"TMOD";
pub const MODEL_VERSION: u32 = 1;

pub fn header_bytes(model: &TrainedModel) -> Vec<u8> {
    serde_json::to_vec(model).expect("model header serializes")
}

pub fn write_model(path: &Path, model: &TrainedModel) -> Result<()> {
    if model.params.len() != model.layout_total() {
        return Err(Error::invalid(format!(
            "{} parameters but layout totals {}",
            model.params.len(),
            model.layout_total()
        )));
    }
    let header = header_bytes(model);
    let mut buf = Vec::with_capacity(24 + header.len() + model.params.len() * 8);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated {what}: needed {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a model file".into(),
        });
    }
    let version = u32::from_le_bytes(c.take(4, "version")?.try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("model version {version} unsupported (expected {MODEL_VERSION})"),
        });
    }
    let header_len = c.u64("header length")? as usize;
    let header_at = c.pos as u64;
    let header = c.take(header_len, "header")?;
    let mut model: TrainedModel = serde_json::from_slice(header).map_err(|e| Error::Format {
        offset: header_at,
        message: format!("bad header: {e}"),
    })?;
    let count_at = c.pos as u64;
    let n = c.u64("parameter count")? as usize;
    if n != model.layout_total() {
        return Err(Error::Format {
            offset: count_at,
            message: format!("{n} parameters but layout totals {}", model.layout_total()),
        });
    }
    let raw = c.take(n.checked_mul(8).unwrap_or(usize::MAX), "parameters")?;
    model.params = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    if c.pos != bytes.len() {
        return Err(Error::Format {
            offset: c.pos as u64,
            message: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok(model)
}

/// One JSON record per epoch.
pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::new();
    for e in log {
        out.push_str(&serde_json::to_string(e).expect("log serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
