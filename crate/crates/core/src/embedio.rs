//! The EMBV1 binary embedding format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "EMBV1\0"            6 bytes
//! flags  u8                   bit0 = rows are L2-normalized
//! dtype  u8                   1 = f32
//! count  u32
//! dim    u32
//! data   count * dim f32      row-major
//! ids    count * (u16 len, UTF-8 bytes)
//! ```
//!
//! Values are held as f64 in memory; every f32 survives the round trip
//! exactly, so write(read(f)) reproduces f byte for byte.

use std::path::Path;

use serde::Serialize;

use crate::datamodel::DatasetManifest;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"EMBV1\0";
pub const DTYPE_F32: u8 = 1;
const FLAG_NORMALIZED: u8 = 1;
const HEADER_LEN: usize = 6 + 1 + 1 + 4 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    data: Vec<f64>,
    ids: Vec<String>,
    normalized: bool,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill {} rows of dim {dim}",
                data.len(),
                ids.len()
            )));
        }
        let bad = non_finite_rows(&data, dim);
        if !bad.is_empty() {
            return Err(Error::NonFinite(bad));
        }
        Ok(EmbeddingSet {
            dim,
            data,
            ids,
            normalized: false,
        })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.len(),
            });
        }
        EmbeddingSet::new(ids, dim, rows.concat())
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// L2-normalize every row. Zero rows are rejected.
    pub fn normalize(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroVector(i));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(EmbeddingSet {
            dim: self.dim,
            data,
            ids: self.ids.clone(),
            normalized: true,
        })
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingSet {
            dim: self.dim,
            data,
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            normalized: self.normalized,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.count())
            .map_err(|_| Error::InvalidArgument("too many rows for EMBV1".into()))?;
        let dim = u32::try_from(self.dim)
            .map_err(|_| Error::InvalidArgument("dim too large for EMBV1".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.push(if self.normalized { FLAG_NORMALIZED } else { 0 });
        out.push(DTYPE_F32);
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        for &x in &self.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        for id in &self.ids {
            let len = u16::try_from(id.len()).map_err(|_| Error::IdTooLong(id.len()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let flags = bytes[6];
        let dtype = bytes[7];
        if dtype != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(dtype));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        let payload = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::InvalidArgument("count * dim overflows".into()))?;
        let data_end = HEADER_LEN + payload;
        if bytes.len() < data_end {
            return Err(Error::TruncatedPayload {
                expected: data_end,
                found: bytes.len(),
            });
        }
        let data: Vec<f64> = bytes[HEADER_LEN..data_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let bad = non_finite_rows(&data, dim);
        if !bad.is_empty() {
            return Err(Error::NonFinite(bad));
        }

        let mut ids = Vec::with_capacity(count);
        let mut at = data_end;
        for i in 0..count {
            if bytes.len() < at + 2 {
                return Err(Error::TruncatedPayload {
                    expected: at + 2,
                    found: bytes.len(),
                });
            }
            let len = u16::from_le_bytes([bytes[at], bytes[at + 1]]) as usize;
            at += 2;
            if bytes.len() < at + len {
                return Err(Error::TruncatedPayload {
                    expected: at + len,
                    found: bytes.len(),
                });
            }
            let id = std::str::from_utf8(&bytes[at..at + len]).map_err(|_| Error::InvalidId(i))?;
            ids.push(id.to_string());
            at += len;
        }
        if at != bytes.len() {
            return Err(Error::TrailingBytes(bytes.len() - at));
        }
        Ok(EmbeddingSet {
            dim,
            data,
            ids,
            normalized: flags & FLAG_NORMALIZED != 0,
        })
    }
}

fn non_finite_rows(data: &[f64], dim: usize) -> Vec<usize> {
    data.chunks_exact(dim)
        .enumerate()
        .filter(|(_, row)| row.iter().any(|x| !x.is_finite()))
        .map(|(i, _)| i)
        .collect()
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_bytes(&bytes)
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_bytes()?).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdMismatch {
    pub index: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub ok: bool,
    /// `(expected, got)` when the row counts differ.
    pub count_mismatch: Option<(usize, usize)>,
    /// Total number of positions whose ids differ.
    pub mismatch_count: usize,
    /// The first ten differing positions.
    pub mismatches: Vec<IdMismatch>,
}

impl AlignmentReport {
    pub fn into_result(self) -> Result<()> {
        if self.ok {
            return Ok(());
        }
        let mut msg = String::new();
        if let Some((expected, got)) = self.count_mismatch {
            msg.push_str(&format!("count mismatch: expected {expected}, got {got}; "));
        }
        msg.push_str(&format!("{} id mismatches", self.mismatch_count));
        if let Some(first) = self.mismatches.first() {
            msg.push_str(&format!(
                ", first at row {}: expected {:?}, found {:?}",
                first.index, first.expected, first.found
            ));
        }
        Err(Error::Misaligned(msg))
    }
}

pub fn validate_alignment(embeddings: &EmbeddingSet, manifest: &DatasetManifest) -> AlignmentReport {
    let expected: Vec<&str> = manifest.ids().collect();
    let got = embeddings.ids();
    let count_mismatch = (expected.len() != got.len()).then_some((expected.len(), got.len()));
    let differing: Vec<IdMismatch> = expected
        .iter()
        .zip(got)
        .enumerate()
        .filter(|(_, (e, g))| **e != g.as_str())
        .map(|(index, (e, g))| IdMismatch {
            index,
            expected: e.to_string(),
            found: g.clone(),
        })
        .collect();
    AlignmentReport {
        ok: count_mismatch.is_none() && differing.is_empty(),
        count_mismatch,
        mismatch_count: differing.len(),
        mismatches: differing.into_iter().take(10).collect(),
    }
}
