//! Self-describing binary array container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "QMARRAY\0"
//! version  u32
//! count    u32
//! entries  count × { name_len u32, name utf-8, dtype u8, ndim u32, dims u64 × ndim, payload }
//! digest   32 bytes SHA-256 of everything above
//! ```
//!
//! Payloads are packed element arrays in row-major order: `f64` (dtype 0),
//! `u8` (dtype 1) or `u64` (dtype 2).

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QMARRAY\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U8(Vec<u8>),
    U64(Vec<u64>),
}

impl ArrayData {
    fn tag(&self) -> u8 {
        match self {
            ArrayData::F64(_) => 0,
            ArrayData::U8(_) => 1,
            ArrayData::U64(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
            ArrayData::U64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

/// Ordered collection of named arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrayFile {
    pub entries: Vec<Entry>,
}

impl ArrayFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        data: ArrayData,
    ) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::dim(format!(
                "array {name:?}: shape {shape:?} does not hold {} elements",
                data.len()
            )));
        }
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::invalid(format!("duplicate array name {name:?}")));
        }
        self.entries.push(Entry {
            name,
            shape: shape.to_vec(),
            data,
        });
        Ok(())
    }

    pub fn push_f64(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        data: Vec<f64>,
    ) -> Result<()> {
        self.push(name, shape, ArrayData::F64(data))
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format(None, format!("missing array {name:?}")))
    }

    pub fn f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let e = self.get(name)?;
        match &e.data {
            ArrayData::F64(v) => Ok((&e.shape, v)),
            _ => Err(Error::format(None, format!("array {name:?} is not f64"))),
        }
    }

    pub fn u8(&self, name: &str) -> Result<(&[usize], &[u8])> {
        let e = self.get(name)?;
        match &e.data {
            ArrayData::U8(v) => Ok((&e.shape, v)),
            _ => Err(Error::format(None, format!("array {name:?} is not u8"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<(&[usize], &[u64])> {
        let e = self.get(name)?;
        match &e.data {
            ArrayData::U64(v) => Ok((&e.shape, v)),
            _ => Err(Error::format(None, format!("array {name:?} is not u64"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.data.tag());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for d in &e.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            match &e.data {
                ArrayData::F64(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::U8(v) => out.extend_from_slice(v),
                ArrayData::U64(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + 32 {
            return Err(Error::format(None, "truncated container"));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::format(None, "bad magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                None,
                format!("unsupported container version {version}"),
            ));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format(
                None,
                "checksum mismatch (corrupt or truncated container)",
            ));
        }
        let count = r.u32()? as usize;
        let mut file = ArrayFile::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format(None, "array name is not utf-8"))?
                .to_string();
            let tag = r.take(1)?[0];
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .ok_or_else(|| Error::format(None, "array shape overflows"))?;
            let data = match tag {
                0 => ArrayData::F64(
                    r.take(
                        n.checked_mul(8)
                            .ok_or_else(|| Error::format(None, "array too large"))?,
                    )?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                ),
                1 => ArrayData::U8(r.take(n)?.to_vec()),
                2 => ArrayData::U64(
                    r.take(
                        n.checked_mul(8)
                            .ok_or_else(|| Error::format(None, "array too large"))?,
                    )?
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                ),
                t => return Err(Error::format(None, format!("unknown dtype tag {t}"))),
            };
            file.push(name, &shape, data)
                .map_err(|e| Error::format(None, e.to_string()))?;
        }
        if r.pos != body.len() {
            return Err(Error::format(None, "trailing bytes after last array"));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { reason, .. } => Error::format(Some(path.to_path_buf()), reason),
            other => other,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::format(None, "truncated container"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
