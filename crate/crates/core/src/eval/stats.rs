use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "correlation over lists of different length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("correlation needs at least two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("correlation input holds a non-finite value"));
    }
    Ok(())
}

/// Sample Pearson correlation, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("Pearson correlation with zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sort `v` ascending and return the number of inversions removed.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    if n1 == n0 || n2 == n0 {
        return Err(Error::Degenerate("Kendall tau with a constant input".into()));
    }
    let s = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub kendall_tau: f64,
    pub pearson_rho: f64,
    pub n: usize,
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    Ok(CorrelationReport {
        kendall_tau: kendall_tau(x, y)?,
        pearson_rho: pearson(x, y)?,
        n: x.len(),
    })
}

/// Confusion matrix of two annotators plus Cohen's kappa.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementMatrix {
    pub labels: Vec<String>,
    /// `counts[i][j]`: first annotator said `labels[i]`, second `labels[j]`.
    pub counts: Vec<Vec<u64>>,
    pub observed: f64,
    pub expected: f64,
    pub kappa: f64,
}

pub fn cohen_kappa<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<AgreementMatrix> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "annotations of different length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("kappa over no annotations"));
    }
    let labels: Vec<String> = a
        .iter()
        .chain(b)
        .map(|l| l.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (x, y) in a.iter().zip(b) {
        counts[index[x.as_ref()]][index[y.as_ref()]] += 1;
    }
    let n = a.len() as u128;
    let agree: u128 = (0..k).map(|i| u128::from(counts[i][i])).sum();
    let chance: u128 = (0..k)
        .map(|i| {
            let row: u64 = counts[i].iter().sum();
            let col: u64 = counts.iter().map(|r| r[i]).sum();
            u128::from(row) * u128::from(col)
        })
        .sum();
    if chance == n * n {
        return Err(Error::Degenerate(
            "kappa undefined: chance agreement is 1".into(),
        ));
    }
    let kappa = match (agree * n).cmp(&chance) {
        Ordering::Equal => 0.0,
        Ordering::Greater => (agree * n - chance) as f64 / (n * n - chance) as f64,
        Ordering::Less => -((chance - agree * n) as f64 / (n * n - chance) as f64),
    };
    Ok(AgreementMatrix {
        labels,
        counts,
        observed: agree as f64 / n as f64,
        expected: chance as f64 / (n * n) as f64,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() <= 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() <= 1e-12);
        assert!(pearson(&x, &[3.0; 20]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn kendall_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let t = kendall_tau(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-15);
        assert!(kendall_tau(&x, &[1.0; 4]).is_err());
    }

    #[test]
    fn kendall_with_ties() {
        // n0=6, n1=1, n2=1 -> (3-1)/sqrt(5*5) = 0.4
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [2.0, 1.0, 3.0, 3.0];
        // pairs: (0,1) d, (0,2) c, (0,3) c, (1,2) x-tie, (1,3) c, (2,3) y-tie
        let t = kendall_tau(&x, &y).unwrap();
        assert!((t - 2.0 / 5.0).abs() < 1e-15, "{t}");
    }

    #[test]
    fn kappa_examples() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [("A", "A", 20), ("B", "B", 20), ("A", "B", 5), ("B", "A", 5)] {
            for _ in 0..n {
                a.push(x);
                b.push(y);
            }
        }
        let m = cohen_kappa(&a, &b).unwrap();
        assert_eq!(m.observed, 0.8);
        assert_eq!(m.expected, 0.5);
        assert!((m.kappa - 0.6).abs() <= 1e-12);
        assert_eq!(m.counts, vec![vec![20, 5], vec![5, 20]]);
        assert_eq!(cohen_kappa(&a, &a).unwrap().kappa, 1.0);
        assert!(cohen_kappa(&["x", "x"], &["x", "x"]).is_err());
        assert!(cohen_kappa::<&str>(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_transform_invariant(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(t) = kendall_tau(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&t));
                let cubed: Vec<f64> = x.iter().map(|v| v * v * v + 5.0).collect();
                prop_assert_eq!(kendall_tau(&cubed, &y).unwrap(), t);
            }
            if let Ok(r) = pearson(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                let affine: Vec<f64> = x.iter().map(|v| 3.0 * v - 7.0).collect();
                prop_assert!((pearson(&affine, &y).unwrap() - r).abs() < 1e-9);
            }
        }
    }
}
