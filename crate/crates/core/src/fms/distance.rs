use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Word-level Levenshtein distance with unit costs.
pub fn word_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // keep the inner loop over the shorter sequence
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance if it does not exceed `budget`, `None` otherwise.
///
/// The minimum of each DP row never decreases from one row to the next and
/// bounds the final distance from below, so the scan stops at the first
/// row whose minimum is over budget.
pub(crate) fn bounded_edit_distance<T: PartialEq>(a: &[T], b: &[T], budget: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > budget {
        return None;
    }
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return Some(a.len());
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            let v = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            cur[j + 1] = v;
            row_min = row_min.min(v);
        }
        if row_min > budget {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= budget).then_some(d)
}

/// Denominator used to turn an edit distance into a fuzzy-match score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `max(|query|, |source|)`: symmetric, always in [0, 1].
    #[default]
    MaxLength,
    /// `|query|`, clamped at 0 when the distance exceeds the query length.
    QueryLength,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-length" | "max" => Ok(Normalization::MaxLength),
            "query-length" | "query" => Ok(Normalization::QueryLength),
            other => Err(Error::Config(format!(
                "unknown normalization `{other}` (expected max-length|query-length)"
            ))),
        }
    }
}

impl Normalization {
    pub(crate) fn denominator(self, query_len: usize, source_len: usize) -> usize {
        match self {
            Normalization::MaxLength => query_len.max(source_len),
            Normalization::QueryLength => query_len,
        }
    }

    /// Score for a given distance; `denom` must be non-zero.
    pub(crate) fn score(self, distance: usize, denom: usize) -> f64 {
        let s = 1.0 - distance as f64 / denom as f64;
        match self {
            Normalization::MaxLength => s,
            Normalization::QueryLength => s.max(0.0),
        }
    }

    /// Largest distance whose score still reaches `threshold`, capped at
    /// `cap` (the largest distance possible). `None` if even a zero
    /// distance falls short.
    pub(crate) fn max_distance(self, threshold: f64, denom: usize, cap: usize) -> Option<usize> {
        if self.score(0, denom) < threshold {
            return None;
        }
        let guess = ((1.0 - threshold) * denom as f64).floor().max(0.0) as usize;
        let mut e = guess.min(cap);
        while e < cap && self.score(e + 1, denom) >= threshold {
            e += 1;
        }
        while self.score(e, denom) < threshold {
            e -= 1;
        }
        Some(e)
    }
}

/// Fuzzy-match score `1 - ED / max(|query|, |source|)`.
pub fn fms(query: &[String], source: &[String]) -> Result<f64> {
    fms_with(query, source, Normalization::MaxLength)
}

pub fn fms_with(query: &[String], source: &[String], norm: Normalization) -> Result<f64> {
    let denom = norm.denominator(query.len(), source.len());
    if denom == 0 {
        return Err(Error::Degenerate(
            "fuzzy-match score of empty sentences".into(),
        ));
    }
    Ok(norm.score(word_edit_distance(query, source), denom))
}

/// Post-editing effort estimate: the complement of a fuzzy-match score.
pub fn effort_estimate(score: f64) -> f64 {
    1.0 - score
}
