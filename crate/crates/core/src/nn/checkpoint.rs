//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MGACKPT\0"
//! version  u32      currently 1
//! count    u32      number of entries
//! entry*   name_len u32, name (UTF-8), kind u8 (0 = trainable, 1 = buffer),
//!          ndim u32, dims u64 * ndim, values f64 * prod(dims)
//! ```
//!
//! Entries are written in name order, so identical stores produce identical
//! files.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{MgaError, Result};
use crate::nn::{ParamKind, ParameterStore, Tensor};

pub const MAGIC: &[u8; 8] = b"MGACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(store: &ParameterStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, entry) in store.entries() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(match entry.kind {
            ParamKind::Trainable => 0,
            ParamKind::Buffer => 1,
        });
        let shape = entry.tensor.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in entry.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(MgaError::Data(format!("checkpoint truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParameterStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(MgaError::Data("not a parameter checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(MgaError::Data(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = r.u32()?;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| MgaError::Data("checkpoint entry name is not UTF-8".into()))?
            .to_owned();
        let kind = match r.take(1)?[0] {
            0 => ParamKind::Trainable,
            1 => ParamKind::Buffer,
            k => return Err(MgaError::Data(format!("unknown entry kind {k} for `{name}`"))),
        };
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(&name, Tensor::new(&shape, data)?, kind);
    }
    if r.pos != bytes.len() {
        return Err(MgaError::Data("trailing bytes after checkpoint entries".into()));
    }
    Ok(store)
}

pub fn save(store: &ParameterStore, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| MgaError::io(path, e))?;
    f.write_all(&encode(store)).map_err(|e| MgaError::io(path, e))
}

pub fn load(path: &Path) -> Result<ParameterStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| MgaError::io(path, e))?;
    decode(&bytes)
}
