//! Little-endian binary container shared by the persisted PCA and SOM models.
//!
//! Layout: 4 magic bytes, a `u16` version, then a model-specific sequence of
//! `u64` header fields and `f64` payload values, all little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const VERSION: u16 = 1;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Writer { buf }
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != magic {
            return Err(Error::parse(
                format!("{what} byte 0"),
                format!("missing magic {:?}", String::from_utf8_lossy(magic)),
            ));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::parse(
                format!("{what} byte 4"),
                format!("unsupported version {version}"),
            ));
        }
        Ok(Reader {
            bytes,
            pos: 6,
            what,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                format!("{} byte {}", self.what, self.pos),
                "unexpected end of data",
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// Reads a `u64` header field that must fit a sane in-memory size.
    pub(crate) fn len(&mut self, limit: u64) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        if v > limit {
            return Err(Error::parse(
                format!("{} byte {at}", self.what),
                format!("size field {v} exceeds {limit}"),
            ));
        }
        Ok(v as usize)
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::parse(format!("{} byte {}", self.what, self.pos), "length overflow")
        })?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(
                format!("{} byte {}", self.what, self.pos),
                "trailing bytes after payload",
            ));
        }
        Ok(())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}
