use std::collections::HashSet;

use serde::Serialize;

use super::{TestPair, Tokenizer};

/// Per-rule drop counts from [`filter_test_set`], in rule order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub input: usize,
    pub duplicates: usize,
    pub identical_source_reference: usize,
    pub one_word_source: usize,
    pub token_ratio: usize,
    pub kept: usize,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.duplicates + self.identical_source_reference + self.one_word_source + self.token_ratio
    }
}

/// Apply the test-set hygiene rules in fixed order:
///
/// 1. exact duplicate `(source, reference)` pairs (first occurrence kept);
/// 2. source identical to reference;
/// 3. source with exactly one token;
/// 4. source/reference token-count ratio (either direction) below 1/5.
pub fn filter_test_set(
    pairs: Vec<TestPair>,
    tokenizer: &Tokenizer,
) -> (Vec<TestPair>, FilterReport) {
    let mut report = FilterReport {
        input: pairs.len(),
        ..FilterReport::default()
    };
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut kept = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if !seen.insert((pair.source.clone(), pair.reference.clone())) {
            report.duplicates += 1;
            continue;
        }
        if pair.source == pair.reference {
            report.identical_source_reference += 1;
            continue;
        }
        let src_len = tokenizer.tokenize(&pair.source).len();
        if src_len == 1 {
            report.one_word_source += 1;
            continue;
        }
        let ref_len = tokenizer.tokenize(&pair.reference).len();
        let (short, long) = (src_len.min(ref_len), src_len.max(ref_len));
        // short/long < 1/5, in integers
        if 5 * short < long {
            report.token_ratio += 1;
            continue;
        }
        kept.push(pair);
    }
    report.kept = kept.len();
    (kept, report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub removed: usize,
    /// Pairs passed through because they carry no document id.
    pub no_id: usize,
}

/// Remove test pairs whose document id appears in any of `others`.
pub fn exclude_overlap(
    test: Vec<TestPair>,
    others: &[HashSet<String>],
) -> (Vec<TestPair>, OverlapReport) {
    let mut report = OverlapReport::default();
    let kept = test
        .into_iter()
        .filter(|p| match &p.doc_id {
            None => {
                report.no_id += 1;
                true
            }
            Some(d) if others.iter().any(|set| set.contains(d)) => {
                report.removed += 1;
                false
            }
            Some(_) => true,
        })
        .collect();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(id: u64, s: &str, r: &str) -> TestPair {
        TestPair {
            id,
            source: s.into(),
            reference: r.into(),
            doc_id: None,
        }
    }

    fn run(pairs: Vec<TestPair>) -> (Vec<TestPair>, FilterReport) {
        filter_test_set(pairs, &Tokenizer::default())
    }

    #[test]
    fn dedup_keeps_first() {
        let (kept, rep) = run(vec![pair(0, "a b", "x y"), pair(1, "a b", "x y")]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, 0);
        assert_eq!(rep.duplicates, 1);
    }

    #[test]
    fn identical_text_dropped() {
        let (kept, rep) = run(vec![pair(0, "Article 5", "Article 5")]);
        assert!(kept.is_empty());
        assert_eq!(rep.identical_source_reference, 1);
    }

    #[test]
    fn one_word_source_dropped() {
        let (_, rep) = run(vec![pair(0, "Annex", "Anexo del reglamento")]);
        assert_eq!(rep.one_word_source, 1);
    }

    #[test]
    fn ratio_rule() {
        // 2 vs 11 tokens: 2/11 < 1/5
        let (kept, rep) = run(vec![pair(0, "a b", "c d e f g h i j k l m")]);
        assert!(kept.is_empty());
        assert_eq!(rep.token_ratio, 1);
        // 2 vs 10 tokens: exactly 1/5, kept
        let (kept, _) = run(vec![pair(0, "a b", "c d e f g h i j k l")]);
        assert_eq!(kept.len(), 1);
        // reverse direction
        let (_, rep) = run(vec![pair(0, "c d e f g h i j k l m", "a b")]);
        assert_eq!(rep.token_ratio, 1);
    }

    #[test]
    fn overlap_exclusion() {
        let mut with_id = pair(0, "a b", "c d");
        with_id.doc_id = Some("32019R0001".into());
        let mut other_id = pair(1, "e f", "g h");
        other_id.doc_id = Some("32020R0002".into());
        let no_id = pair(2, "i j", "k l");
        let tm_docs: HashSet<String> = ["32019R0001".to_string()].into();
        let (kept, rep) = exclude_overlap(vec![with_id, other_id, no_id], &[tm_docs]);
        let ids: Vec<u64> = kept.iter().map(|p| p.id).collect();
        assert_eq!(ids, [1, 2]);
        assert_eq!(rep, OverlapReport { removed: 1, no_id: 1 });
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<TestPair>> {
        let sentence = prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "."]), 0..12)
            .prop_map(|w| w.join(" "));
        prop::collection::vec((sentence.clone(), sentence), 0..30).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .filter(|(_, (s, r))| !s.trim().is_empty() && !r.trim().is_empty())
                .map(|(i, (s, r))| pair(i as u64, &s, &r))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn idempotent_and_counts_add_up(pairs in arb_pairs()) {
            let n = pairs.len();
            let (once, rep) = run(pairs);
            prop_assert_eq!(rep.dropped(), n - once.len());
            let (twice, rep2) = run(once.clone());
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(rep2.dropped(), 0);
        }
    }
}
