//! Flat binary tensor archive.
//!
//! ```text
//! "IAVC" | u32 version | entry*
//! entry = u32 name_len | name (UTF-8) | u32 rank | u64 extent × rank | f64 × Π extents
//! ```
//!
//! All integers and floats are little-endian. Entries run to end of file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"IAVC";
pub const ARCHIVE_VERSION: u32 = 1;

pub fn encode_entry(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Byte cursor that reports truncation as a corrupt file.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptFile(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn entry(&mut self) -> Result<(String, Tensor)> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|e| Error::CorruptFile(format!("entry name: {e}")))?
            .to_string();
        let rank = self.u32()? as usize;
        if !(1..=3).contains(&rank) {
            return Err(Error::CorruptFile(format!("entry `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::CorruptFile(format!("entry `{name}` payload truncated")));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        let t = Tensor::new(shape, data).map_err(|e| Error::CorruptFile(e.to_string()))?;
        Ok((name, t))
    }
}

pub fn encode_archive(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    for (name, t) in entries {
        encode_entry(&mut out, name, t);
    }
    out
}

pub fn decode_archive(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: ARCHIVE_VERSION });
    }
    let mut entries = Vec::new();
    while !r.is_done() {
        entries.push(r.entry()?);
    }
    Ok(entries)
}

pub fn write_archive(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    fs::write(path, encode_archive(entries))?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode_archive(&fs::read(path)?)
}
