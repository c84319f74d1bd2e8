//! Binary checkpoint container.
//!
//! ```text
//! "CPLM" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//! records: u32 name_len | name | u8 dtype | u8 rank | rank × u64 dims | u64 len | payload
//! SHA-256 of everything above (32 bytes)
//! ```
//! All integers little-endian.

use std::io::Write;
use std::path::Path;

use crate::digest::bytes_digest;
use crate::error::{Corruption, Error, Result};
use crate::kernel::Tensor;

pub const MAGIC: &[u8; 4] = b"CPLM";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    PackedUint = 1,
    Bitmask = 2,
}

impl DType {
    fn from_code(c: u8) -> Option<DType> {
        match c {
            0 => Some(DType::F32),
            1 => Some(DType::PackedUint),
            2 => Some(DType::Bitmask),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<u64>,
    pub payload: Vec<u8>,
}

impl Record {
    pub fn f32(name: impl Into<String>, t: &Tensor) -> Record {
        Record {
            name: name.into(),
            dtype: DType::F32,
            dims: t.shape().iter().map(|&d| d as u64).collect(),
            payload: t.to_le_bytes(),
        }
    }

    pub fn bytes(name: impl Into<String>, dtype: DType, dims: &[usize], payload: Vec<u8>) -> Record {
        Record { name: name.into(), dtype, dims: dims.iter().map(|&d| d as u64).collect(), payload }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.dtype != DType::F32 || !self.payload.len().is_multiple_of(4) {
            return Err(Error::Corrupt(Corruption::Malformed));
        }
        let data =
            self.payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        Tensor::new(self.dims(), data.collect()).map_err(|_| Error::Corrupt(Corruption::Malformed))
    }
}

pub fn encode(meta: &serde_json::Value, records: &[Record]) -> Vec<u8> {
    let meta = serde_json::to_vec(meta).expect("json value serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(r.dtype as u8);
        out.push(r.dims.len() as u8);
        for d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(r.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&r.payload);
    }
    let digest = bytes_digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(Error::Corrupt(Corruption::Truncated))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt(Corruption::Malformed))
    }
}

/// Parses a container, checking magic, version, structure and digest in that order.
pub fn decode(bytes: &[u8]) -> Result<(serde_json::Value, Vec<Record>)> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Corrupt(Corruption::Truncated));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Corrupt(Corruption::BadMagic));
    }
    if bytes.len() < 8 + DIGEST_LEN {
        return Err(Error::Corrupt(Corruption::Truncated));
    }
    let body = &bytes[..bytes.len() - DIGEST_LEN];
    let mut c = Cursor { buf: body, pos: 4 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Corrupt(Corruption::UnsupportedVersion(version)));
    }
    let meta_len = c.len()?;
    let meta_bytes = c.take(meta_len)?;
    let mut records = Vec::new();
    while c.pos < body.len() {
        let name_len = c.u32()? as usize;
        let name = c.take(name_len)?;
        let dtype = DType::from_code(c.u8()?);
        let rank = c.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u64()?);
        }
        let len = c.len()?;
        let payload = c.take(len)?.to_vec();
        let name = String::from_utf8(name.to_vec());
        match (name, dtype) {
            (Ok(name), Some(dtype)) => records.push(Record { name, dtype, dims, payload }),
            _ => return Err(Error::Corrupt(Corruption::Malformed)),
        }
    }
    if bytes_digest(body)[..] != bytes[body.len()..] {
        return Err(Error::Corrupt(Corruption::DigestMismatch));
    }
    let meta = serde_json::from_slice(meta_bytes).map_err(|_| Error::Corrupt(Corruption::Malformed))?;
    Ok((meta, records))
}

/// Writes through a temporary sibling and renames, so a crash never leaves
/// a half-written file under the final name.
pub fn write_file(path: &Path, meta: &serde_json::Value, records: &[Record]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode(meta, records))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<(serde_json::Value, Vec<Record>)> {
    decode(&std::fs::read(path)?)
}
