//! The query pipeline: gather proposals from fuzzy matching and embedding
//! retrieval, attach estimated scores, threshold, rank and combine.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{MonoSentence, TranslationUnit};
use crate::embedprovider::EmbeddingProvider;
use crate::embedspace::{default_nprobe, search_exact, search_ivf, EmbeddingMatrix, IvfIndex, SimMatch};
use crate::error::{Error, Result};
use crate::fms::{FmsIndex, FmsQuery, Normalization};
use crate::scorer::{estimate_fms, ScoreBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Origin {
    Tm,
    Mono,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RetrievalKind {
    Fms,
    Neuro,
}

/// A retrieval path that can be switched on per query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "tm-fms")]
    TmFms,
    #[serde(rename = "tm-neuro")]
    TmNeuro,
    #[serde(rename = "mono-neuro")]
    MonoNeuro,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::TmFms, Source::TmNeuro, Source::MonoNeuro];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::TmFms => "tm-fms",
            Source::TmNeuro => "tm-neuro",
            Source::MonoNeuro => "mono-neuro",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "tm-fms" => Ok(Source::TmFms),
            "tm-neuro" => Ok(Source::TmNeuro),
            "mono-neuro" => Ok(Source::MonoNeuro),
            _ => Err(Error::Config(format!(
                "unknown source `{s}` (tm-fms, tm-neuro, mono-neuro)"
            ))),
        }
    }
}

/// Parse a comma-separated source list.
pub fn parse_sources(list: &str) -> Result<BTreeSet<Source>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "target")]
    pub target_text: String,
    pub origin: Origin,
    pub origin_id: u64,
    pub retrieval_kind: RetrievalKind,
    /// FMS for fuzzy matches, cosine for embedding matches.
    pub retrieval_score: f64,
    pub estimated_fms: Option<f64>,
    #[serde(rename = "tm_source", default, skip_serializing_if = "Option::is_none")]
    pub tm_source_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryConfig {
    pub k_fms: usize,
    pub k_neuro: usize,
    pub fms_min: f64,
    pub neuro_min_estimated: f64,
    pub sources: BTreeSet<Source>,
    /// Drop embedding matches below this cosine before scoring.
    pub neuro_cosine_floor: Option<f64>,
    /// Probe count for the IVF indices; `None` scans exactly.
    pub nprobe: Option<usize>,
    pub fms_normalization: Normalization,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            k_fms: 5,
            k_neuro: 5,
            fms_min: 0.6,
            neuro_min_estimated: 0.6,
            sources: Source::ALL.into_iter().collect(),
            neuro_cosine_floor: None,
            nprobe: None,
            fms_normalization: Normalization::MaxLength,
        }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_fms == 0 || self.k_neuro == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        for (name, v) in [
            ("fms_min", self.fms_min),
            ("neuro_min_estimated", self.neuro_min_estimated),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.sources.is_empty() {
            return Err(Error::Config("no retrieval source enabled".into()));
        }
        if self.nprobe == Some(0) {
            return Err(Error::Config("nprobe must be at least 1".into()));
        }
        Ok(())
    }
}

/// Target-side embeddings with an optional IVF index over them.
#[derive(Debug, Clone)]
pub struct NeuroIndex {
    pub matrix: EmbeddingMatrix,
    pub ivf: Option<IvfIndex>,
}

impl NeuroIndex {
    pub fn new(matrix: EmbeddingMatrix, ivf: Option<IvfIndex>) -> Result<Self> {
        if let Some(ivf) = &ivf {
            ivf.check_matrix(&matrix)?;
        }
        Ok(NeuroIndex { matrix, ivf })
    }

    pub fn search(&self, query: &[f32], k: usize, nprobe: Option<usize>) -> Result<Vec<SimMatch>> {
        match (nprobe, &self.ivf) {
            (None, _) => search_exact(&self.matrix, query, k),
            (Some(p), Some(ivf)) => search_ivf(ivf, &self.matrix, query, k, p.min(ivf.nlist())),
            (Some(_), None) => Err(Error::Config("nprobe given but no IVF index is loaded".into())),
        }
    }

    pub fn default_nprobe(&self) -> Option<usize> {
        self.ivf.as_ref().map(|i| default_nprobe(i.nlist()))
    }
}

/// Immutable retrieval resources shared by concurrent queries.
#[derive(Default, Clone)]
pub struct Engine {
    pub fms_index: Option<FmsIndex>,
    pub tm: HashMap<u64, TranslationUnit>,
    pub tm_neuro: Option<NeuroIndex>,
    pub mono: HashMap<u64, MonoSentence>,
    pub mono_neuro: Option<NeuroIndex>,
    pub provider: Option<Arc<dyn EmbeddingProvider>>,
    pub scorer: Option<Arc<dyn ScoreBackend>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("tm", &self.tm.len())
            .field("mono", &self.mono.len())
            .field("fms_index", &self.fms_index.is_some())
            .field("tm_neuro", &self.tm_neuro.is_some())
            .field("mono_neuro", &self.mono_neuro.is_some())
            .finish_non_exhaustive()
    }
}

fn missing(what: &str) -> Error {
    Error::Config(format!("{what} is not loaded"))
}

impl Engine {
    /// Union of the enabled sources' top-k lists, in the order TM fuzzy
    /// matches, TM targets by embedding, monolingual sentences by embedding.
    pub fn gather(&self, query: &str, config: &QueryConfig) -> Result<Vec<Proposal>> {
        config.validate()?;
        if query.trim().is_empty() {
            return Err(Error::invalid("empty query"));
        }
        let mut out = Vec::new();
        if config.sources.contains(&Source::TmFms) {
            let index = self.fms_index.as_ref().ok_or_else(|| missing("fuzzy-match index"))?;
            let q = index.tokenizer().tokenize(query);
            if !q.is_empty() {
                let params = FmsQuery {
                    k: config.k_fms,
                    min_score: config.fms_min,
                    normalization: config.fms_normalization,
                };
                for m in index.retrieve(&q, &params)? {
                    let tu = self.tu(m.tu_id)?;
                    out.push(Proposal {
                        target_text: tu.target.clone(),
                        origin: Origin::Tm,
                        origin_id: tu.id,
                        retrieval_kind: RetrievalKind::Fms,
                        retrieval_score: m.score,
                        estimated_fms: None,
                        tm_source_text: Some(tu.source.clone()),
                    });
                }
            }
        }
        let tm_neuro = config.sources.contains(&Source::TmNeuro);
        let mono_neuro = config.sources.contains(&Source::MonoNeuro);
        if tm_neuro || mono_neuro {
            // fail on missing indices before calling the provider
            let tm_index = tm_neuro
                .then(|| self.tm_neuro.as_ref().ok_or_else(|| missing("TM embedding index")))
                .transpose()?;
            let mono_index = mono_neuro
                .then(|| self.mono_neuro.as_ref().ok_or_else(|| missing("monolingual embedding index")))
                .transpose()?;
            let provider = self.provider.as_ref().ok_or_else(|| missing("embedding provider"))?;
            let qv = provider
                .embed(&[query.to_string()])?
                .pop()
                .ok_or_else(|| Error::Provider("provider returned no vector".into()))?;
            let keep = |m: &SimMatch| {
                config
                    .neuro_cosine_floor
                    .is_none_or(|floor| f64::from(m.similarity) >= floor)
            };
            if let Some(index) = tm_index {
                for m in index.search(&qv, config.k_neuro, config.nprobe)?.iter().filter(|m| keep(m)) {
                    let tu = self.tu(m.id)?;
                    out.push(Proposal {
                        target_text: tu.target.clone(),
                        origin: Origin::Tm,
                        origin_id: tu.id,
                        retrieval_kind: RetrievalKind::Neuro,
                        retrieval_score: f64::from(m.similarity),
                        estimated_fms: None,
                        tm_source_text: Some(tu.source.clone()),
                    });
                }
            }
            if let Some(index) = mono_index {
                for m in index.search(&qv, config.k_neuro, config.nprobe)?.iter().filter(|m| keep(m)) {
                    let s = self
                        .mono
                        .get(&m.id)
                        .ok_or_else(|| Error::invalid(format!("embedding id {} has no sentence", m.id)))?;
                    out.push(Proposal {
                        target_text: s.text.clone(),
                        origin: Origin::Mono,
                        origin_id: s.id,
                        retrieval_kind: RetrievalKind::Neuro,
                        retrieval_score: f64::from(m.similarity),
                        estimated_fms: None,
                        tm_source_text: None,
                    });
                }
            }
        }
        Ok(out)
    }

    fn tu(&self, id: u64) -> Result<&TranslationUnit> {
        self.tm
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("index refers to unknown TU {id}")))
    }

    pub fn scorer(&self) -> Result<&dyn ScoreBackend> {
        self.scorer.as_deref().ok_or_else(|| missing("scorer"))
    }

    /// Gather, score, threshold and rank.
    pub fn query(&self, query: &str, config: &QueryConfig) -> Result<Vec<Proposal>> {
        let gathered = self.gather(query, config)?;
        let scored = attach_scores(gathered, self.scorer()?, query)?;
        rank_and_filter(scored, config)
    }
}

/// Fill `estimated_fms` for every proposal with a single scorer batch.
pub fn attach_scores(
    mut proposals: Vec<Proposal>,
    scorer: &dyn ScoreBackend,
    query: &str,
) -> Result<Vec<Proposal>> {
    if proposals.is_empty() {
        return Ok(proposals);
    }
    let pairs: Vec<(String, String)> = proposals
        .iter()
        .map(|p| (query.to_string(), p.target_text.clone()))
        .collect();
    let scores = estimate_fms(scorer, &pairs)?;
    for (p, s) in proposals.iter_mut().zip(scores) {
        p.estimated_fms = Some(s);
    }
    Ok(proposals)
}

fn rank_key(a: &Proposal, b: &Proposal, ea: f64, eb: f64) -> std::cmp::Ordering {
    eb.total_cmp(&ea)
        .then(a.origin.cmp(&b.origin))
        .then(a.origin_id.cmp(&b.origin_id))
        .then(a.retrieval_kind.cmp(&b.retrieval_kind))
        .then_with(|| a.target_text.cmp(&b.target_text))
}

/// Drop proposals under the estimated-score threshold, keep one proposal per
/// target string, and order by (estimate desc, TM before MONO, id asc).
pub fn rank_and_filter(proposals: Vec<Proposal>, config: &QueryConfig) -> Result<Vec<Proposal>> {
    let mut scored = Vec::with_capacity(proposals.len());
    for p in proposals {
        let e = p.estimated_fms.ok_or_else(|| {
            Error::invalid(format!("proposal {:?}/{} has no estimated score", p.origin, p.origin_id))
        })?;
        if e >= config.neuro_min_estimated {
            scored.push((e, p));
        }
    }
    scored.sort_by(|(ea, a), (eb, b)| rank_key(a, b, *ea, *eb));
    let mut seen = HashSet::new();
    Ok(scored
        .into_iter()
        .map(|(_, p)| p)
        .filter(|p| seen.insert(p.target_text.clone()))
        .collect())
}

/// Pick whichever of the two best proposals has the higher estimate; ties
/// go to the fuzzy-match proposal. Unscored proposals are scored first.
pub fn combine_best(
    fms_best: Option<Proposal>,
    neuro_best: Option<Proposal>,
    scorer: &dyn ScoreBackend,
    query: &str,
) -> Result<Option<Proposal>> {
    let score = |p: Option<Proposal>| -> Result<Option<Proposal>> {
        match p {
            Some(p) if p.estimated_fms.is_none() => Ok(attach_scores(vec![p], scorer, query)?.pop()),
            other => Ok(other),
        }
    };
    let (f, n) = (score(fms_best)?, score(neuro_best)?);
    Ok(match (f, n) {
        (Some(f), Some(n)) => {
            if n.estimated_fms > f.estimated_fms {
                Some(n)
            } else {
                Some(f)
            }
        }
        (f, n) => f.or(n),
    })
}

/// The wire form shared by the CLI `--json` output and the service.
pub fn proposals_json(proposals: &[Proposal]) -> String {
    serde_json::to_string(proposals).expect("proposals serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::TableScorer;
    use std::sync::Mutex;

    fn prop(target: &str, origin: Origin, id: u64, kind: RetrievalKind, est: Option<f64>) -> Proposal {
        Proposal {
            target_text: target.into(),
            origin,
            origin_id: id,
            retrieval_kind: kind,
            retrieval_score: 0.5,
            estimated_fms: est,
            tm_source_text: (origin == Origin::Tm).then(|| format!("src{id}")),
        }
    }

    struct Counting {
        inner: TableScorer,
        calls: Mutex<Vec<usize>>,
    }

    impl ScoreBackend for Counting {
        fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
            self.calls.lock().unwrap().push(pairs.len());
            self.inner.score_batch(pairs)
        }
    }

    fn table(entries: &[(&str, f64)]) -> Counting {
        Counting {
            inner: TableScorer::from_entries(
                entries.iter().map(|(t, v)| (("q".to_string(), t.to_string()), *v)),
            ),
            calls: Mutex::new(Vec::new()),
        }
    }

    #[test]
    fn attach_is_one_batch() {
        let s = table(&[("a", 0.2), ("b", 0.4), ("c", 0.9)]);
        let ps = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, t)| prop(t, Origin::Mono, i as u64, RetrievalKind::Neuro, None))
            .collect();
        let out = attach_scores(ps, &s, "q").unwrap();
        assert_eq!(*s.calls.lock().unwrap(), [3]);
        let est: Vec<f64> = out.iter().map(|p| p.estimated_fms.unwrap()).collect();
        assert_eq!(est, [0.2, 0.4, 0.9]);
        assert!(attach_scores(vec![], &s, "q").unwrap().is_empty());
        assert_eq!(s.calls.lock().unwrap().len(), 1);
    }

    #[test]
    fn threshold_and_sort() {
        let cfg = QueryConfig::default();
        let ps = vec![
            prop("x", Origin::Mono, 1, RetrievalKind::Neuro, Some(0.7)),
            prop("y", Origin::Mono, 2, RetrievalKind::Neuro, Some(0.5)),
            prop("z", Origin::Mono, 3, RetrievalKind::Neuro, Some(0.9)),
        ];
        let r = rank_and_filter(ps, &cfg).unwrap();
        assert_eq!(r.iter().map(|p| p.target_text.as_str()).collect::<Vec<_>>(), ["z", "x"]);
    }

    #[test]
    fn tm_wins_ties_and_dedup_keeps_best() {
        let cfg = QueryConfig::default();
        let r = rank_and_filter(
            vec![
                prop("m", Origin::Mono, 0, RetrievalKind::Neuro, Some(0.8)),
                prop("t", Origin::Tm, 9, RetrievalKind::Neuro, Some(0.8)),
            ],
            &cfg,
        )
        .unwrap();
        assert_eq!(r[0].origin, Origin::Tm);
        let r = rank_and_filter(
            vec![
                prop("same", Origin::Mono, 4, RetrievalKind::Neuro, Some(0.7)),
                prop("same", Origin::Tm, 4, RetrievalKind::Fms, Some(0.95)),
            ],
            &cfg,
        )
        .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].estimated_fms, Some(0.95));
        assert!(rank_and_filter(vec![prop("u", Origin::Tm, 1, RetrievalKind::Fms, None)], &cfg).is_err());
    }

    #[test]
    fn combine_rules() {
        let s = table(&[("f", 0.5), ("n", 0.5)]);
        let f = prop("f", Origin::Tm, 1, RetrievalKind::Fms, Some(0.7));
        let n = prop("n", Origin::Mono, 2, RetrievalKind::Neuro, Some(0.5));
        assert_eq!(combine_best(Some(f.clone()), Some(n.clone()), &s, "q").unwrap(), Some(f.clone()));
        assert_eq!(combine_best(None, Some(n.clone()), &s, "q").unwrap(), Some(n.clone()));
        assert_eq!(combine_best(None, None, &s, "q").unwrap(), None);
        // unscored inputs tie at 0.5 -> fuzzy match wins
        let fu = prop("f", Origin::Tm, 1, RetrievalKind::Fms, None);
        let nu = prop("n", Origin::Mono, 2, RetrievalKind::Neuro, None);
        let c = combine_best(Some(fu), Some(nu), &s, "q").unwrap().unwrap();
        assert_eq!(c.target_text, "f");
        assert_eq!(c.estimated_fms, Some(0.5));
    }

    #[test]
    fn wire_format() {
        let p = prop("hola", Origin::Tm, 3, RetrievalKind::Fms, Some(0.75));
        assert_eq!(
            proposals_json(&[p]),
            r#"[{"target":"hola","origin":"TM","origin_id":3,"retrieval_kind":"FMS","retrieval_score":0.5,"estimated_fms":0.75,"tm_source":"src3"}]"#
        );
        let m = prop("x", Origin::Mono, 1, RetrievalKind::Neuro, None);
        assert!(!proposals_json(&[m]).contains("tm_source"));
    }

    #[test]
    fn fms_normalization_is_configurable() {
        let tu = TranslationUnit {
            id: 4,
            source: "a b c d e f g h".into(),
            target: "t".into(),
            doc_id: None,
        };
        let engine = Engine {
            fms_index: Some(crate::fms::build_fms_index(std::slice::from_ref(&tu), Default::default()).unwrap()),
            tm: HashMap::from([(4, tu)]),
            ..Engine::default()
        };
        let mut cfg = QueryConfig {
            sources: BTreeSet::from([Source::TmFms]),
            fms_min: 0.3,
            ..QueryConfig::default()
        };
        // distance 3 over 8 tokens, or over the 5 query tokens
        assert_eq!(engine.gather("a b c d e", &cfg).unwrap()[0].retrieval_score, 0.625);
        cfg.fms_normalization = Normalization::QueryLength;
        assert_eq!(engine.gather("a b c d e", &cfg).unwrap()[0].retrieval_score, 0.4);
    }

    #[test]
    fn sources_parse() {
        let s = parse_sources("tm-fms, MONO_NEURO").unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), [Source::TmFms, Source::MonoNeuro]);
        assert!(parse_sources("tm").is_err());
        let cfg = QueryConfig {
            sources: BTreeSet::new(),
            ..QueryConfig::default()
        };
        assert!(Engine::default().gather("a", &cfg).is_err());
        assert!(Engine::default().gather("a", &QueryConfig::default()).is_err());
    }
}
