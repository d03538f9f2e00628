//! Inverted-file index with a spherical k-means coarse quantizer.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_query, clamped_dot, dot, EmbeddingMatrix, SimMatch, TopK};
use crate::binio::{write_section, Buf, Cursor};
use crate::error::{Error, Result};

pub const IVF_MAGIC: &[u8; 9] = b"TMNE-IVF1";
const ITERATIONS: usize = 20;

/// `ceil(sqrt(count))`, clamped to [1, 65536].
pub fn default_nlist(count: usize) -> usize {
    ((count as f64).sqrt().ceil() as usize).clamp(1, 65536)
}

/// `max(1, nlist / 16)`.
pub fn default_nprobe(nlist: usize) -> usize {
    (nlist / 16).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    seed: u64,
    /// Row count of the matrix the index was trained on.
    count: usize,
    centroids: Vec<f32>,
    lists: Vec<Vec<u32>>,
}

fn normalize_in_place(v: &mut [f32]) -> bool {
    let n = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x = (f64::from(*x) / n) as f32);
    true
}

/// Nearest centroid by dot product; ties go to the lower index.
fn nearest(centroids: &[f32], dim: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::NEG_INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(centroid, v);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

fn assign(matrix: &EmbeddingMatrix, centroids: &[f32]) -> Vec<(usize, f32)> {
    let dim = matrix.dim();
    (0..matrix.count())
        .into_par_iter()
        .map(|r| nearest(centroids, dim, matrix.row(r)))
        .collect()
}

fn kmeans_pp(matrix: &EmbeddingMatrix, nlist: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let dim = matrix.dim();
    let n = matrix.count();
    let mut centroids = Vec::with_capacity(nlist * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(matrix.row(first));
    // squared chord distance to the nearest chosen centroid: 2 - 2cos
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| (2.0 - 2.0 * f64::from(dot(matrix.row(r), matrix.row(first)))).max(0.0))
        .collect();
    for _ in 1..nlist {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (r, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = r;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = matrix.row(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(r, d)| {
            let nd = (2.0 - 2.0 * f64::from(dot(matrix.row(r), &c))).max(0.0);
            if nd < *d {
                *d = nd;
            }
        });
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Train an IVF index with spherical k-means (k-means++ seeding from
/// `seed`, 20 Lloyd iterations, centroids re-normalized every step).
pub fn train_ivf(matrix: &EmbeddingMatrix, nlist: usize, seed: u64) -> Result<IvfIndex> {
    let n = matrix.count();
    if nlist == 0 {
        return Err(Error::Config("nlist must be at least 1".into()));
    }
    if nlist > n {
        return Err(Error::Config(format!(
            "nlist {nlist} exceeds the number of vectors {n}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(Error::invalid("too many vectors for one IVF index"));
    }
    let dim = matrix.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(matrix, nlist, &mut rng);

    for _ in 0..ITERATIONS {
        let assignment = assign(matrix, &centroids);
        let mut sums = vec![0f64; nlist * dim];
        let mut sizes = vec![0usize; nlist];
        for (r, &(c, _)) in assignment.iter().enumerate() {
            sizes[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(matrix.row(r)) {
                *s += f64::from(x);
            }
        }
        // Empty clusters take the rows worst served by their centroid.
        let mut worst: Vec<usize> = (0..n).collect();
        worst.sort_by(|&a, &b| assignment[a].1.total_cmp(&assignment[b].1).then(a.cmp(&b)));
        let mut spare = worst.into_iter();
        for c in 0..nlist {
            let target = &mut centroids[c * dim..(c + 1) * dim];
            let updated = sizes[c] > 0 && {
                for (t, &s) in target.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *t = s as f32;
                }
                normalize_in_place(target)
            };
            if !updated {
                let r = spare.next().unwrap_or(0);
                target.copy_from_slice(matrix.row(r));
            }
        }
    }

    let assignment = assign(matrix, &centroids);
    let mut lists = vec![Vec::new(); nlist];
    for (r, (c, _)) in assignment.into_iter().enumerate() {
        lists[c].push(r as u32);
    }
    Ok(IvfIndex {
        dim,
        seed,
        count: n,
        centroids,
        lists,
    })
}

impl IvfIndex {
    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn centroid(&self, list: usize) -> &[f32] {
        &self.centroids[list * self.dim..(list + 1) * self.dim]
    }

    /// Check that this index was trained on `matrix`'s shape.
    pub fn check_matrix(&self, matrix: &EmbeddingMatrix) -> Result<()> {
        if matrix.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: matrix.dim(),
            });
        }
        if matrix.count() != self.count {
            return Err(Error::invalid(format!(
                "IVF index covers {} rows, matrix has {}",
                self.count,
                matrix.count()
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(IVF_MAGIC)?;
        let mut meta = Buf::default();
        meta.u32(self.dim as u32);
        meta.u32(self.lists.len() as u32);
        meta.u64(self.seed);
        meta.u64(self.count as u64);
        write_section(&mut out, b"META", &meta.0)?;
        let mut cent = Buf::default();
        self.centroids.iter().for_each(|&v| cent.f32(v));
        write_section(&mut out, b"CENT", &cent.0)?;
        let mut lists = Buf::default();
        for l in &self.lists {
            lists.u64(l.len() as u64);
            l.iter().for_each(|&r| lists.u32(r));
        }
        write_section(&mut out, b"LIST", &lists.0)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "IVF index";
        let mut c = Cursor::new(bytes, WHAT);
        c.expect_magic(IVF_MAGIC)?;
        let mut meta = c.section(b"META")?;
        let dim = meta.u32()? as usize;
        let nlist = meta.u32()? as usize;
        let seed = meta.u64()?;
        let count = meta.u64()? as usize;
        meta.finish()?;
        if dim == 0 || nlist == 0 {
            return Err(Error::format(WHAT, "zero dimension or list count"));
        }
        let mut cent = c.section(b"CENT")?;
        if cent.remaining() != nlist * dim * 4 {
            return Err(Error::format(WHAT, "centroid section size"));
        }
        let centroids = (0..nlist * dim)
            .map(|_| cent.f32())
            .collect::<Result<Vec<_>>>()?;
        let mut ls = c.section(b"LIST")?;
        let mut lists = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let m = ls.count(4)?;
            lists.push((0..m).map(|_| ls.u32()).collect::<Result<Vec<_>>>()?);
        }
        ls.finish()?;
        c.finish()?;

        let mut seen = vec![false; count];
        for &r in lists.iter().flatten() {
            match seen.get_mut(r as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::format(WHAT, "row missing, repeated or out of range")),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::format(WHAT, "row missing, repeated or out of range"));
        }
        Ok(IvfIndex {
            dim,
            seed,
            count,
            centroids,
            lists,
        })
    }
}

/// Top-k over the rows of the `nprobe` lists whose centroids are most
/// similar to the query.
pub fn search_ivf(
    index: &IvfIndex,
    matrix: &EmbeddingMatrix,
    query: &[f32],
    k: usize,
    nprobe: usize,
) -> Result<Vec<SimMatch>> {
    check_query(matrix, query, k)?;
    index.check_matrix(matrix)?;
    if nprobe == 0 || nprobe > index.nlist() {
        return Err(Error::Config(format!(
            "nprobe {nprobe} outside [1, {}]",
            index.nlist()
        )));
    }
    let mut probes = TopK::new(nprobe);
    for c in 0..index.nlist() {
        probes.push(dot(index.centroid(c), query), c as u64);
    }
    let ids = matrix.ids();
    let mut top = TopK::new(k);
    for p in probes.into_sorted() {
        for &r in &index.lists[p.id as usize] {
            let r = r as usize;
            top.push(clamped_dot(matrix.row(r), query), ids[r]);
        }
    }
    Ok(top.into_sorted())
}
