//! Human preference annotations.
//!
//! One row per judged source sentence:
//! `source<TAB>proposal_a<TAB>proposal_b<TAB>label[<TAB>scorer_choice]`,
//! where proposal `a` comes from fuzzy matching and `b` from embedding
//! retrieval. Labels are `a`, `b`, `equal` or `neither`; `fms` and `neuro`
//! are accepted as aliases of `a` and `b`.

use std::collections::HashMap;
use std::io::Read;

use serde::Serialize;

use super::stats::{cohen_kappa, AgreementMatrix};
use crate::corpus::SkipReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    A,
    B,
    Equal,
    Neither,
}

impl Preference {
    pub fn as_str(self) -> &'static str {
        match self {
            Preference::A => "a",
            Preference::B => "b",
            Preference::Equal => "equal",
            Preference::Neither => "neither",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "fms" => Some(Preference::A),
            "b" | "neuro" => Some(Preference::B),
            "equal" => Some(Preference::Equal),
            "neither" => Some(Preference::Neither),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub source: String,
    pub proposal_a: String,
    pub proposal_b: String,
    pub label: Preference,
    /// `A` or `B` when the scorer's pick is recorded.
    pub scorer_choice: Option<Preference>,
}

#[derive(Debug, Clone, Default)]
pub struct Annotations {
    pub rows: Vec<AnnotationRow>,
    pub skips: SkipReport,
}

const HEADER_START: &str = "source\t";

pub fn parse_annotations(mut input: impl Read) -> Result<Annotations> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let mut out = Annotations::default();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() || (n == 0 && line.starts_with(HEADER_START)) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&cols.len()) {
            out.skips.push(line_no, format!("expected 4 or 5 columns, found {}", cols.len()));
            continue;
        }
        let Some(label) = Preference::parse(cols[3]) else {
            out.skips.push(line_no, format!("unknown label `{}`", cols[3]));
            continue;
        };
        let scorer_choice = match cols.get(4).map(|c| c.trim()) {
            None | Some("") => None,
            Some(c) => match Preference::parse(c) {
                Some(p @ (Preference::A | Preference::B)) => Some(p),
                _ => {
                    out.skips.push(line_no, format!("scorer choice `{c}` is not a or b"));
                    continue;
                }
            },
        };
        out.rows.push(AnnotationRow {
            source: cols[0].to_string(),
            proposal_a: cols[1].to_string(),
            proposal_b: cols[2].to_string(),
            label,
            scorer_choice,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreferenceReport {
    pub neuro_better: usize,
    pub fms_better: usize,
    pub equal: usize,
    pub neither: usize,
    /// Rows with a human preference for a or b and a recorded scorer choice.
    pub scorer_decided: usize,
    pub scorer_agreed: usize,
    pub scorer_agreement: Option<f64>,
}

pub fn preference_report(rows: &[AnnotationRow]) -> PreferenceReport {
    let mut r = PreferenceReport::default();
    for row in rows {
        match row.label {
            Preference::A => r.fms_better += 1,
            Preference::B => r.neuro_better += 1,
            Preference::Equal => r.equal += 1,
            Preference::Neither => r.neither += 1,
        }
        if let (Preference::A | Preference::B, Some(choice)) = (row.label, row.scorer_choice) {
            r.scorer_decided += 1;
            r.scorer_agreed += usize::from(choice == row.label);
        }
    }
    r.scorer_agreement =
        (r.scorer_decided > 0).then(|| r.scorer_agreed as f64 / r.scorer_decided as f64);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseAgreement {
    pub first: String,
    pub second: String,
    /// Items judged by both annotators.
    pub shared: usize,
    /// `None` when kappa is undefined (degenerate marginals or no overlap).
    pub agreement: Option<AgreementMatrix>,
}

/// Kappa for every pair of annotators, over the items both judged. Items
/// are matched by (source, proposal a, proposal b).
pub fn pairwise_kappa(annotators: &[(String, Vec<AnnotationRow>)]) -> Vec<PairwiseAgreement> {
    type Key<'a> = (&'a str, &'a str, &'a str);
    let maps: Vec<HashMap<Key<'_>, Preference>> = annotators
        .iter()
        .map(|(_, rows)| {
            rows.iter()
                .map(|r| ((r.source.as_str(), r.proposal_a.as_str(), r.proposal_b.as_str()), r.label))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..annotators.len() {
        for j in i + 1..annotators.len() {
            // iterate in the first annotator's file order for determinism
            let (mut a, mut b) = (Vec::new(), Vec::new());
            let mut seen = std::collections::HashSet::new();
            for r in &annotators[i].1 {
                let key = (r.source.as_str(), r.proposal_a.as_str(), r.proposal_b.as_str());
                if !seen.insert(key) {
                    continue;
                }
                if let Some(other) = maps[j].get(&key) {
                    a.push(maps[i][&key].as_str());
                    b.push(other.as_str());
                }
            }
            out.push(PairwiseAgreement {
                first: annotators[i].0.clone(),
                second: annotators[j].0.clone(),
                shared: a.len(),
                agreement: cohen_kappa(&a, &b).ok(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_skips() {
        let text = "source\tproposal_a\tproposal_b\tlabel\n\
                    s1\ta1\tb1\tneuro\n\
                    s2\ta2\tb2\tfms\n\
                    s3\ta3\tb3\tequal\n\
                    bad row\n\
                    s4\ta4\tb4\tmaybe\n";
        let ann = parse_annotations(text.as_bytes()).unwrap();
        assert_eq!(ann.rows.len(), 3);
        assert_eq!(ann.skips.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), [5, 6]);
        let r = preference_report(&ann.rows);
        assert_eq!((r.neuro_better, r.fms_better, r.equal, r.neither), (1, 1, 1, 0));
        assert_eq!(r.scorer_agreement, None);
    }

    #[test]
    fn empty_file() {
        let ann = parse_annotations("".as_bytes()).unwrap();
        assert_eq!(preference_report(&ann.rows), PreferenceReport::default());
    }

    #[test]
    fn scorer_agreement_counts_decided_rows() {
        let mut text = String::new();
        for i in 0..10 {
            let label = if i % 2 == 0 { "a" } else { "b" };
            let choice = if i < 8 { label } else if label == "a" { "b" } else { "a" };
            text.push_str(&format!("s{i}\tx\ty\t{label}\t{choice}\n"));
        }
        text.push_str("s10\tx\ty\tequal\ta\n");
        let ann = parse_annotations(text.as_bytes()).unwrap();
        let r = preference_report(&ann.rows);
        assert_eq!(r.scorer_decided, 10);
        assert_eq!(r.scorer_agreement, Some(0.8));
    }

    #[test]
    fn identical_annotators_agree_fully() {
        let text = "s1\ta\tb\ta\ns2\ta\tb\tb\ns3\ta\tb\tequal\n";
        let rows = parse_annotations(text.as_bytes()).unwrap().rows;
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let m = pairwise_kappa(&[("x".into(), rows.clone()), ("y".into(), shuffled)]);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].shared, 3);
        assert_eq!(m[0].agreement.as_ref().unwrap().kappa, 1.0);
    }
}
