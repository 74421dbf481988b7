//! Binary file formats.
//!
//! Image matrix (`OPVI`): magic, version byte 1, `u32` rows, `u32` cols, then
//! `rows · cols` pixel bytes in row-major order, each 0 or 1.
//!
//! Checkpoint (`OPVC`): magic, version byte 1, then sections until end of
//! file. A section is a `u16` name length, the UTF-8 name, a `u64` element
//! count and that many `f64`s. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DATA_MAGIC: &[u8; 4] = b"OPVI";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OPVC";
pub const VERSION: u8 = 1;

/// A binary image per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageMatrix {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl ImageMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let pixels = rows.iter().flatten().map(|&v| u8::from(v > 0.5)).collect();
        Self { rows: rows.len(), cols, pixels }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.pixels[i * self.cols..(i + 1) * self.cols].iter().map(|&b| f64::from(b)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.pixels.len());
        out.extend_from_slice(DATA_MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses and validates; `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.header(DATA_MAGIC)?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| r.error("image dimensions overflow"))?;
        let pixels = r.take(n)?.to_vec();
        if !r.rest().is_empty() {
            return Err(r.error(&format!("{} trailing bytes", r.rest().len())));
        }
        if let Some(index) = pixels.iter().position(|&b| b > 1) {
            return Err(Error::NonBinaryData { path: path.to_path_buf(), index, value: pixels[index] });
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(Error::io(path))?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(Error::io(path))
    }
}

/// Ordered named `f64` arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    sections: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces a section of the same name in place, else appends.
    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let name = name.into();
        match self.sections.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => *v = values,
            None => self.sections.push((name, values)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(VERSION);
        for (name, values) in &self.sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.header(CHECKPOINT_MAGIC)?;
        let mut cp = Self::new();
        while !r.rest().is_empty() {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| r.error("section name is not UTF-8"))?.to_string();
            if cp.get(&name).is_some() {
                return Err(r.error(&format!("duplicate section `{name}`")));
            }
            let count = r.u64()?;
            let bytes = usize::try_from(count)
                .ok()
                .and_then(|c| c.checked_mul(8))
                .ok_or_else(|| r.error("section too large"))?;
            let values = r.take(bytes)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            cp.sections.push((name, values));
        }
        Ok(cp)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(Error::io(path))?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(Error::io(path))
    }

    /// The section, or a format error naming it.
    pub fn require(&self, name: &str, path: &Path) -> Result<&[f64]> {
        self.get(name)
            .ok_or_else(|| Error::Format { path: path.to_path_buf(), message: format!("missing section `{name}`") })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, at: 0, path }
    }

    fn error(&self, message: &str) -> Error {
        Error::Format { path: self.path.to_path_buf(), message: format!("{message} (at byte {})", self.at) }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(self.error(&format!("truncated: wanted {n} more bytes")));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.at..]
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(self.error(&format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        let version = self.take(1)?[0];
        if version != VERSION {
            return Err(self.error(&format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
