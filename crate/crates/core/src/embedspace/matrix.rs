use std::collections::HashSet;
use std::io::Write;

use super::{normalize, NORM_TOLERANCE};
use crate::binio::Cursor;
use crate::error::{Error, Result};

pub const EMB_MAGIC: &[u8; 9] = b"TMNE-EMB1";
const DTYPE_F32: u8 = 0;
/// Row-norm tolerance applied when loading from disk.
const LOAD_TOLERANCE: f32 = 1e-3;

/// Row-major, id-aligned matrix of unit-normalized f32 vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
}

fn row_norm(row: &[f32]) -> f32 {
    row.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt() as f32
}

impl EmbeddingMatrix {
    /// Build from already-normalized rows; norms must be within 1e-4 of 1.
    pub fn from_rows(dim: usize, ids: Vec<u64>, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(dim, ids, data, NORM_TOLERANCE)
    }

    /// Build from arbitrary non-zero vectors, normalizing each.
    pub fn from_unnormalized(dim: usize, ids: Vec<u64>, rows: &[Vec<f32>]) -> Result<Self> {
        let normed = rows
            .iter()
            .map(|r| {
                if r.len() != dim {
                    Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: r.len(),
                    })
                } else {
                    normalize(r)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(dim, ids, &normed)
    }

    fn from_flat(dim: usize, ids: Vec<u64>, data: Vec<f32>, tol: f32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(format!(
                "{} ids but {} values for dimension {dim}",
                ids.len(),
                data.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::invalid(format!("duplicate embedding id {dup}")));
        }
        for (i, row) in data.chunks_exact(dim).enumerate() {
            let n = row_norm(row);
            if n.is_nan() || (n - 1.0).abs() > tol {
                return Err(Error::invalid(format!(
                    "row {i} (id {}) has norm {n}, expected 1",
                    ids[i]
                )));
            }
        }
        Ok(EmbeddingMatrix { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(EMB_MAGIC)?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        out.write_all(&[DTYPE_F32])?;
        let mut buf = Vec::with_capacity(self.ids.len() * 8 + self.data.len() * 4);
        for id in &self.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    /// Parse an embedding file; rows must be unit-normalized within 1e-3.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "embedding file";
        let mut c = Cursor::new(bytes, WHAT);
        c.expect_magic(EMB_MAGIC)?;
        let dim = c.u32()? as usize;
        let count = c.u64()? as usize;
        let dtype = c.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::format(WHAT, format!("unsupported dtype tag {dtype}")));
        }
        let expected = count
            .checked_mul(8 + dim * 4)
            .ok_or_else(|| Error::format(WHAT, "size overflow"))?;
        if c.remaining() != expected {
            return Err(Error::format(
                WHAT,
                format!("expected {expected} payload bytes, found {}", c.remaining()),
            ));
        }
        let ids = (0..count).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
        let data = (0..count * dim).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
        Self::from_flat(dim, ids, data, LOAD_TOLERANCE)
    }
}
