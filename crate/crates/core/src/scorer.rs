//! Estimated fuzzy-match scores for (source, target proposal) pairs.
//!
//! An estimate stands in for the FMS a proposal would have had if its
//! source side were known, so proposals from monolingual data can be
//! thresholded and ranked next to conventional TM matches. Every backend's
//! output must lie strictly inside (0, 1); anything else is reported as a
//! protocol violation, never clamped.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::TranslationUnit;
use crate::embedprovider::{Lexicon, MOCK_TOKENIZER};
use crate::error::{Error, Result};
use crate::fms::{fms, retrieve_fms, FmsIndex};
use crate::protocol::{BridgeClient, Endpoint};

pub const TRAINSET_HEADER: &str = "tmne-trainset v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScorerKind {
    Bridge,
    Table,
    LexicalBaseline,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridge" => Ok(ScorerKind::Bridge),
            "table" => Ok(ScorerKind::Table),
            "lexical_baseline" | "lexical-baseline" => Ok(ScorerKind::LexicalBaseline),
            other => Err(Error::Config(format!(
                "unknown scorer kind `{other}` (bridge, table, lexical_baseline)"
            ))),
        }
    }
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScorerKind::Bridge => "bridge",
            ScorerKind::Table => "table",
            ScorerKind::LexicalBaseline => "lexical_baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub endpoint: Option<Endpoint>,
    pub table_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
}

impl ScorerConfig {
    pub fn lexical(lexicon_path: impl Into<PathBuf>) -> Self {
        ScorerConfig {
            kind: ScorerKind::LexicalBaseline,
            endpoint: None,
            table_path: None,
            lexicon_path: Some(lexicon_path.into()),
        }
    }

    /// Exactly the fields the kind needs must be set.
    pub fn validate(&self) -> Result<()> {
        let have = [
            ("endpoint", self.endpoint.is_some()),
            ("table_path", self.table_path.is_some()),
            ("lexicon_path", self.lexicon_path.is_some()),
        ];
        let need = match self.kind {
            ScorerKind::Bridge => "endpoint",
            ScorerKind::Table => "table_path",
            ScorerKind::LexicalBaseline => "lexicon_path",
        };
        for (field, present) in have {
            if field == need && !present {
                return Err(Error::Config(format!("{} scorer needs {field}", self.kind)));
            }
            if field != need && present {
                return Err(Error::Config(format!(
                    "{} scorer does not take {field}",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

pub trait ScoreBackend: Send + Sync {
    /// Raw scores, one per pair. Range checks happen in [`estimate_fms`].
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>>;
}

/// `0.001 + 0.998 * fms(mapped source, target)`, where source tokens are
/// mapped through the lexicon and unmapped tokens pass through.
pub fn lexical_baseline_score(source: &str, target: &str, lexicon: &Lexicon) -> f64 {
    let mapped: Vec<String> = MOCK_TOKENIZER
        .tokenize(source)
        .iter()
        .map(|t| lexicon.map_token(t).to_string())
        .collect();
    let target = MOCK_TOKENIZER.tokenize(target);
    let f = fms(&mapped, &target).unwrap_or(0.0);
    0.001 + 0.998 * f
}

#[derive(Debug, Clone)]
pub struct LexicalScorer {
    lexicon: Arc<Lexicon>,
}

impl LexicalScorer {
    pub fn new(lexicon: Arc<Lexicon>) -> Self {
        LexicalScorer { lexicon }
    }
}

impl ScoreBackend for LexicalScorer {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|(s, t)| lexical_baseline_score(s, t, &self.lexicon))
            .collect())
    }
}

/// Fixed lookup table of precomputed scores.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    table: HashMap<(String, String), f64>,
}

impl TableScorer {
    pub fn from_entries(entries: impl IntoIterator<Item = ((String, String), f64)>) -> Self {
        TableScorer {
            table: entries.into_iter().collect(),
        }
    }

    /// `source<TAB>target<TAB>score` lines.
    pub fn parse(input: impl BufRead) -> Result<Self> {
        let mut table = HashMap::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::format("score table", format!("line {}: expected source<TAB>target<TAB>score", n + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            let [s, t, v] = cols.as_slice() else {
                return Err(bad());
            };
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            table.insert((s.to_string(), t.to_string()), v);
        }
        Ok(TableScorer { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::with_path(path, e))?;
        Self::parse(BufReader::new(file))
    }
}

impl ScoreBackend for TableScorer {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|p| {
                self.table.get(p).copied().ok_or_else(|| {
                    Error::Scorer(format!("no table entry for pair ({:?}, {:?})", p.0, p.1))
                })
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct BridgeScorer {
    client: Arc<BridgeClient>,
}

impl BridgeScorer {
    pub fn new(client: Arc<BridgeClient>) -> Self {
        BridgeScorer { client }
    }
}

impl ScoreBackend for BridgeScorer {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        self.client.score(pairs)
    }
}

pub fn open_scorer(config: &ScorerConfig) -> Result<Arc<dyn ScoreBackend>> {
    config.validate()?;
    Ok(match config.kind {
        ScorerKind::LexicalBaseline => {
            let path = config.lexicon_path.as_deref().expect("validated");
            Arc::new(LexicalScorer::new(Arc::new(Lexicon::load(path)?)))
        }
        ScorerKind::Table => {
            Arc::new(TableScorer::load(config.table_path.as_deref().expect("validated"))?)
        }
        ScorerKind::Bridge => Arc::new(BridgeScorer::new(BridgeClient::connect(
            config.endpoint.as_ref().expect("validated"),
        )?)),
    })
}

/// Score `pairs` with one backend call and enforce the (0, 1) contract.
pub fn estimate_fms(backend: &dyn ScoreBackend, pairs: &[(String, String)]) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to score"));
    }
    let scores = backend.score_batch(pairs)?;
    if scores.len() != pairs.len() {
        return Err(Error::Protocol(format!(
            "scorer returned {} scores for {} pairs",
            scores.len(),
            pairs.len()
        )));
    }
    if let Some((i, v)) = scores
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
    {
        return Err(Error::Protocol(format!(
            "score {v} for pair {i} lies outside (0, 1)"
        )));
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTriple {
    pub query_source: String,
    pub proposal_target: String,
    pub target_fms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LooTrainset {
    pub triples: Vec<TrainTriple>,
    pub skipped: usize,
}

/// For each TU, the best FMS match among the other TUs (by id) with score
/// at least `min_score`, labeled with that FMS. TUs without one are counted
/// in `skipped`.
pub fn build_loo_trainset(
    tm: &[TranslationUnit],
    index: &FmsIndex,
    min_score: f64,
) -> Result<LooTrainset> {
    if !(0.0..=1.0).contains(&min_score) {
        return Err(Error::invalid(format!("min_score {min_score} outside [0, 1]")));
    }
    let by_id: HashMap<u64, &TranslationUnit> = tm.iter().map(|tu| (tu.id, tu)).collect();
    let tokenizer = index.tokenizer();
    let found: Vec<Option<TrainTriple>> = tm
        .par_iter()
        .map(|tu| {
            let q = tokenizer.tokenize(&tu.source);
            if q.is_empty() {
                return Ok(None);
            }
            // the TU itself occupies at most one of the two slots
            let hits = retrieve_fms(index, &q, 2, min_score)?;
            Ok(hits
                .into_iter()
                .find(|m| m.tu_id != tu.id)
                .and_then(|m| by_id.get(&m.tu_id).map(|other| (m, other)))
                .map(|(m, other)| TrainTriple {
                    query_source: tu.source.clone(),
                    proposal_target: other.target.clone(),
                    target_fms: m.score,
                }))
        })
        .collect::<Result<_>>()?;
    let skipped = found.iter().filter(|t| t.is_none()).count();
    Ok(LooTrainset {
        triples: found.into_iter().flatten().collect(),
        skipped,
    })
}

pub fn write_trainset(mut out: impl Write, triples: &[TrainTriple]) -> Result<()> {
    writeln!(out, "{TRAINSET_HEADER}")?;
    for t in triples {
        writeln!(out, "{}\t{}\t{}", t.query_source, t.proposal_target, t.target_fms)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trainset(input: impl BufRead) -> Result<Vec<TrainTriple>> {
    const WHAT: &str = "trainset";
    let mut lines = input.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim_end() == TRAINSET_HEADER => {}
        _ => return Err(Error::format(WHAT, format!("missing `{TRAINSET_HEADER}` header"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |d: &str| Error::format(WHAT, format!("line {}: {d}", n + 2));
        let cols: Vec<&str> = line.split('\t').collect();
        let [s, t, f] = cols.as_slice() else {
            return Err(bad("expected three columns"));
        };
        let f: f64 = f.parse().map_err(|_| bad("fms is not a number"))?;
        if !(0.0..=1.0).contains(&f) {
            return Err(bad("fms outside [0, 1]"));
        }
        out.push(TrainTriple {
            query_source: s.to_string(),
            proposal_target: t.to_string(),
            target_fms: f,
        });
    }
    Ok(out)
}

/// Concatenate trainsets in order, optionally dropping repeated triples
/// (first occurrence kept).
pub fn concat_trainsets(sets: Vec<Vec<TrainTriple>>, dedup: bool) -> Vec<TrainTriple> {
    let mut seen = HashSet::new();
    sets.into_iter()
        .flatten()
        .filter(|t| {
            !dedup
                || seen.insert((
                    t.query_source.clone(),
                    t.proposal_target.clone(),
                    t.target_fms.to_bits(),
                ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Tokenizer};
    use crate::fms::build_fms_index;

    fn pair(s: &str, t: &str) -> (String, String) {
        (s.to_string(), t.to_string())
    }

    fn tu(id: u64, s: &str, t: &str) -> TranslationUnit {
        TranslationUnit {
            id,
            source: s.into(),
            target: t.into(),
            doc_id: None,
        }
    }

    #[test]
    fn baseline_examples() {
        let l = Lexicon::from_pairs([("cat", "gato")]).unwrap();
        assert_eq!(lexical_baseline_score("cat", "gato", &l), 0.999);
        assert_eq!(lexical_baseline_score("cat", "perro", &l), 0.001);
        // mapped [gato b c d] vs [gato b c x]: fms 0.75
        let v = lexical_baseline_score("cat b c d", "gato b c x", &l);
        assert!((v - 0.7495).abs() < 1e-12, "{v}");
    }

    #[test]
    fn baseline_symmetric_under_inversion() {
        let l = Lexicon::from_pairs([("a", "x"), ("b", "y"), ("c", "z")]).unwrap();
        let inv = l.inverted();
        for (s, t) in [("a b c", "x y"), ("c a", "z x q"), ("b", "y")] {
            assert_eq!(
                lexical_baseline_score(s, t, &l),
                lexical_baseline_score(t, s, &inv)
            );
        }
    }

    #[test]
    fn table_lookup_and_missing_pair() {
        let t = TableScorer::parse("a\tb\t0.3\nc\td\t0.9\n".as_bytes()).unwrap();
        assert_eq!(estimate_fms(&t, &[pair("c", "d"), pair("a", "b")]).unwrap(), [0.9, 0.3]);
        let err = estimate_fms(&t, &[pair("a", "z")]).unwrap_err().to_string();
        assert!(err.contains("\"z\""), "{err}");
        assert!(TableScorer::parse("a\tb\n".as_bytes()).is_err());
    }

    #[test]
    fn out_of_range_is_a_protocol_error() {
        for bad in [1.2, 1.0, 0.0, -0.1, f64::NAN] {
            let t = TableScorer::from_entries([(pair("a", "b"), bad)]);
            assert!(matches!(
                estimate_fms(&t, &[pair("a", "b")]),
                Err(Error::Protocol(_))
            ));
        }
        let t = TableScorer::default();
        assert!(estimate_fms(&t, &[]).is_err());
    }

    #[test]
    fn config_fields_must_match_kind() {
        let mut c = ScorerConfig::lexical("lex.tsv");
        assert!(c.validate().is_ok());
        c.table_path = Some("t.tsv".into());
        assert!(c.validate().is_err());
        c.kind = ScorerKind::Table;
        assert!(c.validate().is_err());
        c.lexicon_path = None;
        assert!(c.validate().is_ok());
        c.kind = ScorerKind::Bridge;
        assert!(c.validate().is_err());
    }

    #[test]
    fn loo_identical_sources() {
        let tm = vec![tu(1, "a b c", "x"), tu(2, "a b c", "y")];
        let idx = build_fms_index(&tm, Tokenizer::default()).unwrap();
        let r = build_loo_trainset(&tm, &idx, 0.0).unwrap();
        assert_eq!(r.skipped, 0);
        assert_eq!(r.triples.len(), 2);
        assert_eq!(r.triples[0].proposal_target, "y");
        assert_eq!(r.triples[1].proposal_target, "x");
        assert!(r.triples.iter().all(|t| t.target_fms == 1.0));
    }

    #[test]
    fn loo_threshold_skips() {
        let tm = vec![tu(1, "a b c d", "x"), tu(2, "a b c e", "y"), tu(3, "q r s", "z")];
        let idx = build_fms_index(&tm, Tokenizer::default()).unwrap();
        let r = build_loo_trainset(&tm, &idx, 0.6).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.triples.len(), 2);
    }

    #[test]
    fn loo_matches_all_pairs_oracle() {
        let tm = vec![
            tu(10, "the cat sat on the mat", "t10"),
            tu(11, "the cat sat on a mat", "t11"),
            tu(12, "a dog sat on the mat", "t12"),
        ];
        let idx = build_fms_index(&tm, Tokenizer::default()).unwrap();
        let r = build_loo_trainset(&tm, &idx, 0.0).unwrap();
        for (i, triple) in tm.iter().zip(&r.triples) {
            let qi = tokenize(&i.source);
            // best other by (fms desc, id asc)
            let mut best: Option<(f64, &TranslationUnit)> = None;
            for j in tm.iter().filter(|j| j.id != i.id) {
                let f = fms(&qi, &tokenize(&j.source)).unwrap();
                if best.is_none_or(|(b, _)| f > b) {
                    best = Some((f, j));
                }
            }
            let (f, j) = best.unwrap();
            assert_eq!(triple.target_fms, f);
            assert_eq!(triple.proposal_target, j.target);
        }
    }

    #[test]
    fn trainset_round_trip_and_concat() {
        let t = vec![
            TrainTriple {
                query_source: "a b".into(),
                proposal_target: "x".into(),
                target_fms: 2.0 / 3.0,
            },
            TrainTriple {
                query_source: "c".into(),
                proposal_target: "y".into(),
                target_fms: 1.0,
            },
        ];
        let mut buf = Vec::new();
        write_trainset(&mut buf, &t).unwrap();
        assert!(buf.starts_with(b"tmne-trainset v1\n"));
        let back = read_trainset(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(concat_trainsets(vec![t.clone(), t.clone()], true), t);
        assert_eq!(concat_trainsets(vec![t.clone(), t.clone()], false).len(), 4);
        assert!(read_trainset("tmne-trainset v1\na\tb\t1.5\n".as_bytes()).is_err());
        assert!(read_trainset("a\tb\t0.5\n".as_bytes()).is_err());
    }
}
