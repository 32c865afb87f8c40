//! Binary parameter checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "NIOC" | version u32 | count u32 |
//!   count × ( name_len u32 | name utf-8 | dtype u8 (0 = f32, 1 = f64) |
//!             rank u32 | rank × extent u64 | values )
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::{DType, Tensor};

pub const MAGIC: &[u8; 4] = b"NIOC";
pub const VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(match t.dtype() {
            DType::F32 => 0,
            DType::F64 => 1,
        });
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match t.dtype() {
            DType::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            DType::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::TruncatedFile(format!("checkpoint ends inside {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic(format!("expected \"NIOC\", found {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let count = r.u32("tensor count")?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::InvalidArgument("tensor name is not utf-8".into()))?
            .to_string();
        let dtype = match r.take(1, "dtype")?[0] {
            0 => DType::F32,
            1 => DType::F64,
            other => return Err(Error::InvalidArgument(format!("unknown dtype tag {other} for '{name}'"))),
        };
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::new();
        for _ in 0..rank {
            shape.push(r.u64("extents")? as usize);
        }
        let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::InvalidArgument(format!("extents of '{name}' overflow")))?;
        let width = dtype.size_bytes();
        let raw = r.take(numel.checked_mul(width).unwrap_or(usize::MAX), "values")?;
        let data: Vec<f64> = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect(),
            DType::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
        };
        entries.push((name, Tensor::with_dtype(&shape, data, dtype)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidArgument(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    ParamSet::new(entries)
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn save_checkpoint(params: &ParamSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode(params))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet> {
    decode(&fs::read(path)?)
}
