use serde::Serialize;

use super::ter::{total_ter, TerBreakdown};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsefulnessRow {
    pub threshold: f64,
    pub useful: usize,
    pub total: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsefulnessReport {
    pub rows: Vec<UsefulnessRow>,
}

/// Share of records whose proposal has TER strictly below each threshold.
/// `None` marks a record without a proposal; it counts in the total only.
/// An empty record list gives 0%.
pub fn usefulness(records: &[Option<f64>], thresholds: &[f64]) -> Result<UsefulnessReport> {
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::invalid(format!("threshold {t} outside (0, 1]")));
    }
    let total = records.len();
    let rows = thresholds
        .iter()
        .map(|&threshold| {
            let useful = records
                .iter()
                .filter(|r| r.is_some_and(|ter| ter < threshold))
                .count();
            UsefulnessRow {
                threshold,
                useful,
                total,
                percentage: if total == 0 {
                    0.0
                } else {
                    100.0 * useful as f64 / total as f64
                },
            }
        })
        .collect();
    Ok(UsefulnessReport { rows })
}

/// Per record, the proposal with the lowest TER (first on ties); returns the
/// micro-averaged total TER of the picks.
pub fn oracle_combine(records: &[Vec<Option<TerBreakdown>>]) -> Result<f64> {
    let mut picks = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let best = rec.iter().flatten().fold(None::<&TerBreakdown>, |best, b| match best {
            Some(x) if x.score <= b.score => Some(x),
            _ => Some(b),
        });
        picks.push(*best.ok_or_else(|| Error::invalid(format!("record {i} has no proposal")))?);
    }
    total_ter(&picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb(edits: usize, ref_len: usize) -> TerBreakdown {
        TerBreakdown {
            insertions: 0,
            deletions: 0,
            substitutions: edits,
            shifts: 0,
            ref_len,
            score: edits as f64 / ref_len as f64,
        }
    }

    #[test]
    fn counting() {
        let r = usefulness(&[Some(0.1), Some(0.5), Some(0.39)], &[0.4]).unwrap();
        assert_eq!((r.rows[0].useful, r.rows[0].total), (2, 3));
        assert!((r.rows[0].percentage - 200.0 / 3.0).abs() < 1e-12);
        let r = usefulness(&[Some(0.0), None], &DEFAULT_THRESHOLDS).unwrap();
        assert!(r.rows.iter().all(|row| row.useful == 1 && row.total == 2));
        // strict inequality
        assert_eq!(usefulness(&[Some(0.4)], &[0.4]).unwrap().rows[0].useful, 0);
        assert!(usefulness(&[], &[0.0]).is_err());
        assert_eq!(usefulness(&[], &[0.4]).unwrap().rows[0].percentage, 0.0);
    }

    #[test]
    fn oracle() {
        let recs = vec![vec![Some(tb(2, 10)), Some(tb(5, 10))], vec![Some(tb(4, 10)), Some(tb(1, 10))]];
        assert_eq!(oracle_combine(&recs).unwrap(), 0.15);
        let single = vec![vec![None, Some(tb(3, 7))]];
        assert_eq!(oracle_combine(&single).unwrap(), 3.0 / 7.0);
        assert!(oracle_combine(&[vec![None, None]]).is_err());
    }
}
