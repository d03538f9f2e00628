//! Translation edit rate.
//!
//! Without shifts TER is the word-level Levenshtein distance divided by the
//! reference length. With shifts, a greedy search first moves blocks of the
//! hypothesis, one unit of cost each, as long as a move lowers the total
//! (shifts + remaining edit distance).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fms::{bounded_edit_distance, word_edit_distance};

pub const MAX_SHIFT_BLOCK: usize = 10;
pub const MAX_SHIFT_DISTANCE: usize = 50;
pub const MAX_SHIFT_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TerMode {
    #[default]
    Shifts,
    NoShifts,
}

impl std::str::FromStr for TerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifts" => Ok(TerMode::Shifts),
            "no-shifts" | "no_shifts" => Ok(TerMode::NoShifts),
            _ => Err(Error::Config(format!("unknown TER mode `{s}` (shifts, no-shifts)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerBreakdown {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub shifts: usize,
    pub ref_len: usize,
    pub score: f64,
}

impl TerBreakdown {
    pub fn edits(&self) -> usize {
        self.insertions + self.deletions + self.substitutions + self.shifts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    /// hypothesis word with no reference counterpart
    Del,
    /// reference word missing from the hypothesis
    Ins,
}

/// One minimal alignment, in left-to-right order.
fn align<T: PartialEq>(hyp: &[T], r: &[T]) -> Vec<Op> {
    let (n, m) = (hyp.len(), r.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for (j, cell) in d[..w].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != r[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && hyp[i - 1] == r[j - 1] && here == d[(i - 1) * w + j - 1] {
            ops.push(Op::Match);
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && here == d[(i - 1) * w + j - 1] + 1 {
            ops.push(Op::Sub);
            i -= 1;
            j -= 1;
        } else if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(Op::Del);
            i -= 1;
        } else {
            ops.push(Op::Ins);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

struct Alignment {
    hyp_err: Vec<bool>,
    ref_err: Vec<bool>,
    /// Twice the reference position each hypothesis word sits at; unaligned
    /// words sit just before the next reference word.
    hyp_key: Vec<usize>,
}

fn alignment<T: PartialEq>(hyp: &[T], r: &[T]) -> Alignment {
    let mut a = Alignment {
        hyp_err: Vec::with_capacity(hyp.len()),
        ref_err: Vec::with_capacity(r.len()),
        hyp_key: Vec::with_capacity(hyp.len()),
    };
    let mut j = 0;
    for op in align(hyp, r) {
        match op {
            Op::Match | Op::Sub => {
                a.hyp_err.push(op == Op::Sub);
                a.ref_err.push(op == Op::Sub);
                a.hyp_key.push(2 * j + 1);
                j += 1;
            }
            Op::Del => {
                a.hyp_err.push(true);
                a.hyp_key.push(2 * j);
            }
            Op::Ins => {
                a.ref_err.push(true);
                j += 1;
            }
        }
    }
    a
}

/// The shift (if any) that most lowers `shifts + edit distance`; ties go to
/// the first candidate in (hyp start, block length desc, ref start) order.
fn best_shift<T: PartialEq + Clone>(hyp: &[T], r: &[T], cur: usize) -> Option<(Vec<T>, usize)> {
    if cur < 2 {
        return None;
    }
    let al = alignment(hyp, r);
    let mut best: Option<(Vec<T>, usize)> = None;
    for i in 0..hyp.len() {
        for len in (1..=MAX_SHIFT_BLOCK.min(hyp.len() - i)).rev() {
            let block = &hyp[i..i + len];
            if !al.hyp_err[i..i + len].iter().any(|&e| e) {
                continue;
            }
            for j in 0..(r.len() + 1).saturating_sub(len) {
                if i.abs_diff(j) > MAX_SHIFT_DISTANCE
                    || r[j..j + len] != *block
                    || !al.ref_err[j..j + len].iter().any(|&e| e)
                {
                    continue;
                }
                let rest: Vec<&T> = hyp[..i].iter().chain(&hyp[i + len..]).collect();
                let keys = al.hyp_key[..i].iter().chain(&al.hyp_key[i + len..]);
                let dest = keys.filter(|&&k| k < 2 * j + 1).count();
                if dest == i {
                    continue;
                }
                let moved: Vec<T> = rest[..dest]
                    .iter()
                    .map(|t| (*t).clone())
                    .chain(block.iter().cloned())
                    .chain(rest[dest..].iter().map(|t| (*t).clone()))
                    .collect();
                // must beat both the current state and the best shift so far
                let target = best.as_ref().map_or(cur, |b| b.1 + 1);
                if target < 2 {
                    continue;
                }
                if let Some(ed) = bounded_edit_distance(&moved, r, target - 2) {
                    best = Some((moved, ed));
                }
            }
        }
    }
    best
}

fn breakdown<T: PartialEq>(hyp: &[T], r: &[T], shifts: usize) -> TerBreakdown {
    let (mut ins, mut del, mut sub) = (0, 0, 0);
    for op in align(hyp, r) {
        match op {
            Op::Ins => ins += 1,
            Op::Del => del += 1,
            Op::Sub => sub += 1,
            Op::Match => {}
        }
    }
    TerBreakdown {
        insertions: ins,
        deletions: del,
        substitutions: sub,
        shifts,
        ref_len: r.len(),
        score: (ins + del + sub + shifts) as f64 / r.len() as f64,
    }
}

pub fn ter<T: PartialEq + Clone>(hyp: &[T], reference: &[T], mode: TerMode) -> Result<TerBreakdown> {
    if reference.is_empty() {
        return Err(Error::invalid("TER needs a non-empty reference"));
    }
    if mode == TerMode::NoShifts {
        return Ok(breakdown(hyp, reference, 0));
    }
    let mut current = hyp.to_vec();
    let mut ed = word_edit_distance(&current, reference);
    let mut shifts = 0;
    while shifts < MAX_SHIFT_ITERATIONS {
        match best_shift(&current, reference, ed) {
            Some((moved, new_ed)) => {
                current = moved;
                ed = new_ed;
                shifts += 1;
            }
            None => break,
        }
    }
    Ok(breakdown(&current, reference, shifts))
}

/// Σ edits / Σ reference length.
pub fn total_ter(items: &[TerBreakdown]) -> Result<f64> {
    let refs: usize = items.iter().map(|b| b.ref_len).sum();
    if refs == 0 {
        return Err(Error::Degenerate("total TER over no references".into()));
    }
    Ok(items.iter().map(TerBreakdown::edits).sum::<usize>() as f64 / refs as f64)
}

/// Mean of per-sentence scores.
pub fn mean_ter(items: &[TerBreakdown]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Degenerate("mean TER over no sentences".into()));
    }
    Ok(items.iter().map(|b| b.score).sum::<f64>() / items.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_and_substitution() {
        let r = w("a b c d e");
        assert_eq!(ter(&r, &r, TerMode::Shifts).unwrap().score, 0.0);
        let b = ter(&w("a b x d e"), &r, TerMode::NoShifts).unwrap();
        assert_eq!((b.substitutions, b.insertions, b.deletions), (1, 0, 0));
        assert_eq!(b.score, 0.2);
    }

    #[test]
    fn rotation_is_one_shift() {
        let (h, r) = (w("c a b"), w("a b c"));
        let ns = ter(&h, &r, TerMode::NoShifts).unwrap();
        assert_eq!(ns.score, 2.0 / 3.0);
        let s = ter(&h, &r, TerMode::Shifts).unwrap();
        assert_eq!(s.shifts, 1);
        assert_eq!(s.edits(), 1);
        assert_eq!(s.score, 1.0 / 3.0);
    }

    #[test]
    fn block_shift() {
        // moving "d e f" to the front fixes everything
        let r = w("d e f a b c g");
        let h = w("a b c d e f g");
        let s = ter(&h, &r, TerMode::Shifts).unwrap();
        assert_eq!(s.edits(), 1, "{s:?}");
        assert!(ter(&h, &r, TerMode::NoShifts).unwrap().edits() > 1);
    }

    #[test]
    fn breakdown_kinds() {
        let b = ter(&w("a b c d"), &w("a c d e f"), TerMode::NoShifts).unwrap();
        assert_eq!(b.deletions, 1);
        assert_eq!(b.insertions, 2);
        assert_eq!(b.edits(), 3);
        let empty: Vec<&str> = vec![];
        let b = ter(&empty, &w("x y"), TerMode::Shifts).unwrap();
        assert_eq!((b.insertions, b.score), (2, 1.0));
        assert!(ter(&w("x"), &empty, TerMode::Shifts).is_err());
        // score may exceed 1
        assert_eq!(ter(&w("p q r s"), &w("x"), TerMode::NoShifts).unwrap().score, 4.0);
    }

    #[test]
    fn hypothesis_longer_than_reference() {
        let b = ter(&w("b a c d e f g"), &w("a b c d e"), TerMode::Shifts).unwrap();
        assert!(b.score <= ter(&w("b a c d e f g"), &w("a b c d e"), TerMode::NoShifts).unwrap().score);
        assert_eq!(ter(&w("x y z w v"), &w("y x"), TerMode::Shifts).unwrap().ref_len, 2);
    }

    #[test]
    fn totals() {
        let a = ter(&w("a b"), &w("a c"), TerMode::NoShifts).unwrap();
        let b = ter(&w("x y z"), &w("x y z q"), TerMode::NoShifts).unwrap();
        assert_eq!(total_ter(&[a, b]).unwrap(), 2.0 / 6.0);
        assert_eq!(mean_ter(&[a, b]).unwrap(), (0.5 + 0.25) / 2.0);
        assert!(total_ter(&[]).is_err());
    }
}
