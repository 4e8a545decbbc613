//! BEMB embedding files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   b"BEMB"
//! u32     version (1)
//! u32     D, the vector dimension
//! record* u32 id length, UTF-8 id bytes, D x f32
//! ```
//!
//! The record count is implied by the file length; a file that ends inside a
//! record is rejected.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const BEMB_MAGIC: &[u8; 4] = b"BEMB";
pub const BEMB_VERSION: u32 = 1;

/// Dimension of CLIP ViT-B/32 image embeddings.
pub const DEFAULT_DIM: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub vector: Vec<f32>,
    /// True once the vector has been scaled to unit length. Files store raw
    /// encoder output, so readers always produce `false`.
    pub normalized: bool,
}

impl Embedding {
    pub fn new(id: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            vector,
            normalized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Unit-length copy. Zero vectors are returned unchanged.
    pub fn normalized(&self) -> Embedding {
        let n = self.vector.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        let vector = if n > 0.0 {
            self.vector.iter().map(|&v| (v as f64 / n) as f32).collect()
        } else {
            self.vector.clone()
        };
        Embedding {
            id: self.id.clone(),
            vector,
            normalized: true,
        }
    }
}

/// Serializes embeddings. All vectors must share one dimension; `dim` is used
/// for the header when the list is empty.
pub fn encode_embeddings(embeddings: &[Embedding], dim: usize) -> Result<Vec<u8>> {
    let dim = embeddings.first().map_or(dim, Embedding::dim);
    let mut out = Vec::with_capacity(12 + embeddings.len() * (8 + 4 * dim));
    out.extend_from_slice(BEMB_MAGIC);
    out.extend_from_slice(&BEMB_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::Format(format!(
                "embedding {:?} has dimension {}, expected {dim}",
                e.id,
                e.dim()
            )));
        }
        if let Some(v) = e.vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("embedding {:?} contains {v}", e.id)));
        }
        out.extend_from_slice(&(e.id.len() as u32).to_le_bytes());
        out.extend_from_slice(e.id.as_bytes());
        for v in &e.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated {what} at byte {} (need {n}, have {})",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a BEMB buffer, returning the header dimension and the records.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<Embedding>)> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != BEMB_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"BEMB\"")));
    }
    let version = cur.u32("version")?;
    if version != BEMB_VERSION {
        return Err(Error::Format(format!("unsupported BEMB version {version}")));
    }
    let dim = cur.u32("dimension")? as usize;
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let record = out.len();
        let id_len = cur.u32("id length")? as usize;
        let id = std::str::from_utf8(cur.take(id_len, "id")?)
            .map_err(|e| Error::Format(format!("record {record}: id is not UTF-8: {e}")))?
            .to_owned();
        let raw = cur.take(4 * dim, "vector")?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("record {record} ({id:?}) contains {v}")));
        }
        out.push(Embedding::new(id, vector));
    }
    Ok((dim, out))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<Embedding>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes).map(|(_, e)| e)
}

pub fn write_embeddings(path: impl AsRef<Path>, embeddings: &[Embedding]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(embeddings, DEFAULT_DIM)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}
