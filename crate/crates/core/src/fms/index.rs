use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use serde::Serialize;

use super::distance::{bounded_edit_distance, Normalization};
use crate::corpus::{TokenizedSentence, Tokenizer, TranslationUnit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Posting {
    pub row: u32,
    pub tf: u32,
}

/// Inverted token index over the source side of a translation memory.
///
/// Rows are stored in ascending TU-id order, so posting lists sorted by row
/// are also sorted by TU id.
#[derive(Debug, Clone, PartialEq)]
pub struct FmsIndex {
    pub(crate) tokenizer: Tokenizer,
    pub(crate) ids: Vec<u64>,
    pub(crate) lengths: Vec<u32>,
    pub(crate) vocab: Vec<String>,
    pub(crate) dict: HashMap<String, u32>,
    pub(crate) postings: Vec<Vec<Posting>>,
    pub(crate) sources: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FmsMatch {
    pub tu_id: u64,
    pub score: f64,
    pub edit_distance: usize,
}

/// Retrieval parameters for [`FmsIndex::retrieve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmsQuery {
    pub k: usize,
    pub min_score: f64,
    pub normalization: Normalization,
}

impl Default for FmsQuery {
    fn default() -> Self {
        FmsQuery {
            k: 5,
            min_score: 0.6,
            normalization: Normalization::MaxLength,
        }
    }
}

/// Counters describing how much work the pruning saved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetrievalStats {
    pub candidates: usize,
    pub length_pruned: usize,
    pub overlap_pruned: usize,
    pub dp_runs: usize,
    pub dp_aborted: usize,
}

pub fn build_fms_index(tm: &[TranslationUnit], tokenizer: Tokenizer) -> Result<FmsIndex> {
    let mut order: Vec<&TranslationUnit> = tm.iter().collect();
    order.sort_by_key(|tu| tu.id);
    if let Some(w) = order.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::invalid(format!("duplicate TU id {}", w[0].id)));
    }
    if order.len() > u32::MAX as usize {
        return Err(Error::invalid("too many TUs for one index"));
    }

    let mut index = FmsIndex {
        tokenizer,
        ids: Vec::with_capacity(order.len()),
        lengths: Vec::with_capacity(order.len()),
        vocab: Vec::new(),
        dict: HashMap::new(),
        postings: Vec::new(),
        sources: Vec::with_capacity(order.len()),
    };
    for (row, tu) in order.into_iter().enumerate() {
        let tokens = tokenizer.tokenize(&tu.source);
        let mut token_ids = Vec::with_capacity(tokens.len());
        for t in tokens.tokens() {
            let id = match index.dict.get(t) {
                Some(&id) => id,
                None => {
                    let id = index.vocab.len() as u32;
                    index.vocab.push(t.clone());
                    index.dict.insert(t.clone(), id);
                    index.postings.push(Vec::new());
                    id
                }
            };
            token_ids.push(id);
        }
        let mut counts: Vec<(u32, u32)> = Vec::new();
        let mut sorted = token_ids.clone();
        sorted.sort_unstable();
        for t in sorted {
            match counts.last_mut() {
                Some((last, n)) if *last == t => *n += 1,
                _ => counts.push((t, 1)),
            }
        }
        for (t, tf) in counts {
            index.postings[t as usize].push(Posting {
                row: row as u32,
                tf,
            });
        }
        index.ids.push(tu.id);
        index.lengths.push(token_ids.len() as u32);
        index.sources.push(token_ids);
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    row: u32,
    distance: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    /// Greater is better: higher score, then lower row.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.row.cmp(&self.row))
    }
}

impl FmsIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    /// TU ids whose source contains `token`, ascending.
    pub fn postings(&self, token: &str) -> Vec<u64> {
        self.dict
            .get(token)
            .map(|&t| {
                self.postings[t as usize]
                    .iter()
                    .map(|p| self.ids[p.row as usize])
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Token count of a TU's source.
    pub fn source_length(&self, tu_id: u64) -> Option<usize> {
        self.ids
            .binary_search(&tu_id)
            .ok()
            .map(|row| self.lengths[row] as usize)
    }

    /// Stored source tokens of a TU.
    pub fn source_tokens(&self, tu_id: u64) -> Option<Vec<&str>> {
        let row = self.ids.binary_search(&tu_id).ok()?;
        Some(
            self.sources[row]
                .iter()
                .map(|&t| self.vocab[t as usize].as_str())
                .collect(),
        )
    }

    /// Tokenize `text` with the index tokenizer and retrieve.
    pub fn retrieve_text(&self, text: &str, query: &FmsQuery) -> Result<Vec<FmsMatch>> {
        self.retrieve(&self.tokenizer.tokenize(text), query)
    }

    pub fn retrieve(&self, query: &TokenizedSentence, params: &FmsQuery) -> Result<Vec<FmsMatch>> {
        self.retrieve_with_stats(query, params).map(|(m, _)| m)
    }

    /// Top-k TUs by fuzzy-match score at or above `min_score`, sorted by
    /// (score desc, TU id asc). Identical to scoring every TU.
    pub fn retrieve_with_stats(
        &self,
        query: &TokenizedSentence,
        params: &FmsQuery,
    ) -> Result<(Vec<FmsMatch>, RetrievalStats)> {
        if query.is_empty() {
            return Err(Error::invalid("empty query"));
        }
        if params.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(0.0..=1.0).contains(&params.min_score) {
            return Err(Error::invalid(format!(
                "min_score {} outside [0, 1]",
                params.min_score
            )));
        }
        let norm = params.normalization;
        let min_score = params.min_score;
        let q_len = query.len();
        let mut stats = RetrievalStats::default();

        // Unknown tokens map to u32::MAX, which no stored token equals.
        let q_ids: Vec<u32> = query
            .iter()
            .map(|t| self.dict.get(t).copied().unwrap_or(u32::MAX))
            .collect();
        let mut q_counts: HashMap<u32, u32> = HashMap::new();
        for &t in q_ids.iter().filter(|&&t| t != u32::MAX) {
            *q_counts.entry(t).or_default() += 1;
        }

        // multiset intersection size per row
        let mut overlap: HashMap<u32, u32> = HashMap::new();
        for (&t, &cq) in &q_counts {
            for p in &self.postings[t as usize] {
                *overlap.entry(p.row).or_default() += cq.min(p.tf);
            }
        }

        // A row sharing no token scores 0 under either normalization, so a
        // positive threshold only needs the rows reached through postings.
        let rows: Vec<u32> = if min_score > 0.0 {
            let mut r: Vec<u32> = overlap.keys().copied().collect();
            r.sort_unstable();
            r
        } else {
            (0..self.ids.len() as u32).collect()
        };

        let mut candidates: Vec<(f64, u32)> = Vec::with_capacity(rows.len());
        for row in rows {
            stats.candidates += 1;
            let len = self.lengths[row as usize] as usize;
            let denom = norm.denominator(q_len, len);
            if norm.score(len.abs_diff(q_len), denom) < min_score {
                stats.length_pruned += 1;
                continue;
            }
            let common = overlap.get(&row).copied().unwrap_or(0) as usize;
            let upper = norm.score(len.max(q_len) - common, denom);
            if upper < min_score {
                stats.overlap_pruned += 1;
                continue;
            }
            candidates.push((upper, row));
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut best: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(params.k + 1);
        for (upper, row) in candidates {
            let worst = if best.len() == params.k {
                best.peek().map(|r| r.0)
            } else {
                None
            };
            if let Some(w) = worst {
                let bound = Ranked {
                    score: upper,
                    row,
                    distance: 0,
                };
                // candidates are visited by decreasing bound, then row
                if bound < w {
                    break;
                }
            }
            let len = self.lengths[row as usize] as usize;
            let denom = norm.denominator(q_len, len);
            let threshold = worst.map_or(min_score, |w| w.score.max(min_score));
            let Some(budget) = norm.max_distance(threshold, denom, len.max(q_len)) else {
                continue;
            };
            stats.dp_runs += 1;
            let Some(distance) = bounded_edit_distance(&q_ids, &self.sources[row as usize], budget)
            else {
                stats.dp_aborted += 1;
                continue;
            };
            let score = norm.score(distance, denom);
            if score < min_score {
                continue;
            }
            let cand = Ranked {
                score,
                row,
                distance,
            };
            if best.len() < params.k {
                best.push(Reverse(cand));
            } else if worst.is_some_and(|w| cand > w) {
                best.pop();
                best.push(Reverse(cand));
            }
        }

        let mut out: Vec<Ranked> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        Ok((
            out.into_iter()
                .map(|r| FmsMatch {
                    tu_id: self.ids[r.row as usize],
                    score: r.score,
                    edit_distance: r.distance,
                })
                .collect(),
            stats,
        ))
    }
}

/// Retrieve with the default (max-length) normalization.
pub fn retrieve_fms(
    index: &FmsIndex,
    query: &TokenizedSentence,
    k: usize,
    min_score: f64,
) -> Result<Vec<FmsMatch>> {
    index.retrieve(
        query,
        &FmsQuery {
            k,
            min_score,
            normalization: Normalization::MaxLength,
        },
    )
}
