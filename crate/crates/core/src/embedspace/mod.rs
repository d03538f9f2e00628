//! Unit-normalized sentence embeddings and top-k cosine search.
//!
//! Cosine similarity between unit vectors is a dot product. Exact search
//! scans every row; [`IvfIndex`] narrows the scan to the rows assigned to
//! the `nprobe` centroids closest to the query. All result lists are
//! ordered by (similarity desc, id asc).

mod ivf;
mod matrix;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ivf::{default_nlist, default_nprobe, search_ivf, train_ivf, IvfIndex, IVF_MAGIC};
pub use matrix::{EmbeddingMatrix, EMB_MAGIC};

/// Tolerance on row norms accepted when building a matrix in memory.
pub const NORM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMatch {
    pub id: u64,
    pub similarity: f32,
}

/// Scale a vector to unit L2 norm.
pub fn normalize(vector: &[f32]) -> Result<Vec<f32>> {
    let norm = vector
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
    }
    Ok(vector.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// Dot product with eight independent accumulators; the fixed summation
/// order keeps results bit-identical between exact and IVF scans.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn clamped_dot(a: &[f32], b: &[f32]) -> f32 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// Cosine of two unit vectors, clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(clamped_dot(u, v))
}

/// `|approx ∩ exact| / k` for two id lists of equal length k.
pub fn recall_at_k(approx: &[u64], exact: &[u64]) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::invalid(format!(
            "recall over lists of different length ({} vs {})",
            approx.len(),
            exact.len()
        )));
    }
    if exact.is_empty() {
        return Err(Error::invalid("recall over empty lists"));
    }
    let truth: HashSet<u64> = exact.iter().copied().collect();
    let hits = approx
        .iter()
        .collect::<HashSet<_>>()
        .into_iter()
        .filter(|id| truth.contains(id))
        .count();
    Ok(hits as f64 / exact.len() as f64)
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    sim: f32,
    id: u64,
}

impl PartialEq for Hit {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Hit {}

impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Hit {
    // greater is better
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Bounded selection of the k best (similarity, id) pairs.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Hit>>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, sim: f32, id: u64) {
        let hit = Hit { sim, id };
        if self.heap.len() < self.k {
            self.heap.push(Reverse(hit));
        } else if self.heap.peek().is_some_and(|w| hit > w.0) {
            self.heap.pop();
            self.heap.push(Reverse(hit));
        }
    }

    pub fn into_sorted(self) -> Vec<SimMatch> {
        let mut hits: Vec<Hit> = self.heap.into_iter().map(|r| r.0).collect();
        hits.sort_by(|a, b| b.cmp(a));
        hits.into_iter()
            .map(|h| SimMatch {
                id: h.id,
                similarity: h.sim,
            })
            .collect()
    }
}

pub(crate) fn check_query(matrix: &EmbeddingMatrix, query: &[f32], k: usize) -> Result<()> {
    if query.len() != matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            actual: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

/// Exact top-k by cosine over every row.
pub fn search_exact(matrix: &EmbeddingMatrix, query: &[f32], k: usize) -> Result<Vec<SimMatch>> {
    check_query(matrix, query, k)?;
    let mut top = TopK::new(k);
    for (row, id) in matrix.ids().iter().enumerate() {
        top.push(clamped_dot(matrix.row(row), query), *id);
    }
    Ok(top.into_sorted())
}

/// [`search_exact`] for many queries, fanned out over the thread pool.
/// Output order matches input order.
pub fn search_exact_batch(
    matrix: &EmbeddingMatrix,
    queries: &[Vec<f32>],
    k: usize,
) -> Result<Vec<Vec<SimMatch>>> {
    queries
        .par_iter()
        .map(|q| search_exact(matrix, q, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f32, b: f32) -> bool {
        (a - b).abs() < 1e-6
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert!(approx(v[0], 0.6) && approx(v[1], 0.8));
        let u = normalize(&v).unwrap();
        assert!(approx(u[0], v[0]) && approx(u[1], v[1]));
        assert!(normalize(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn normalize_hits_unit_norm() {
        let v: Vec<f32> = (0..768).map(|i| ((i * 37 % 101) as f32 - 50.0) * 1e3).collect();
        let n = normalize(&v).unwrap();
        let norm: f64 = n.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "{norm}");
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(approx(cosine(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(cosine(&[1.0, 0.0], &[1.0]).is_err());
        // rounding above 1 is clamped
        let big = [1.0000001f32, 0.0];
        assert_eq!(cosine(&big, &big).unwrap(), 1.0);
    }

    #[test]
    fn recall_examples() {
        let e: Vec<u64> = (0..10).collect();
        assert_eq!(recall_at_k(&e, &e).unwrap(), 1.0);
        let d: Vec<u64> = (10..20).collect();
        assert_eq!(recall_at_k(&d, &e).unwrap(), 0.0);
        let seven: Vec<u64> = (0..7).chain(100..103).collect();
        assert!((recall_at_k(&seven, &e).unwrap() - 0.7).abs() < 1e-12);
        assert!(recall_at_k(&e[..3], &e).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32).sin()).collect();
        let b: Vec<f32> = (0..37).map(|i| (i as f32 * 0.3).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        assert!((f64::from(dot(&a, &b)) - naive).abs() < 1e-5);
    }

    fn matrix3() -> EmbeddingMatrix {
        let rows = vec![
            normalize(&[1.0, 0.0, 0.0]).unwrap(),
            normalize(&[1.0, 1.0, 0.0]).unwrap(),
            normalize(&[0.0, 0.0, 1.0]).unwrap(),
        ];
        EmbeddingMatrix::from_rows(3, vec![10, 11, 12], &rows).unwrap()
    }

    #[test]
    fn exact_identity_and_order() {
        let m = matrix3();
        let q = normalize(&[1.0, 0.0, 0.0]).unwrap();
        let r = search_exact(&m, &q, 3).unwrap();
        // dots: 1.0, 1/sqrt(2), 0
        let ids: Vec<u64> = r.iter().map(|s| s.id).collect();
        assert_eq!(ids, [10, 11, 12]);
        assert_eq!(r[0].similarity, 1.0);
        assert!(approx(r[1].similarity, std::f32::consts::FRAC_1_SQRT_2));
        assert_eq!(r[2].similarity, 0.0);
        // k beyond count returns everything
        assert_eq!(search_exact(&m, &q, 50).unwrap().len(), 3);
        assert!(search_exact(&m, &[1.0, 0.0], 1).is_err());
    }

    #[test]
    fn exact_ties_by_id() {
        let v = normalize(&[1.0, 2.0]).unwrap();
        let m = EmbeddingMatrix::from_rows(2, vec![7, 3, 5], &[v.clone(), v.clone(), v.clone()])
            .unwrap();
        let r = search_exact(&m, &v, 2).unwrap();
        assert_eq!(r.iter().map(|s| s.id).collect::<Vec<_>>(), [3, 5]);
    }

    #[test]
    fn batch_matches_single() {
        let m = matrix3();
        let qs = vec![
            normalize(&[0.0, 1.0, 0.0]).unwrap(),
            normalize(&[0.0, 0.0, 1.0]).unwrap(),
        ];
        let batch = search_exact_batch(&m, &qs, 2).unwrap();
        for (q, b) in qs.iter().zip(&batch) {
            assert_eq!(&search_exact(&m, q, 2).unwrap(), b);
        }
    }
}
