//! Whole retrieval pipeline on the synthetic fixture, assembled in process.

use std::collections::BTreeSet;
use std::sync::Arc;

use tmne_core::corpus::{tokenize, Tokenizer};
use tmne_core::embedprovider::{embed_matrix, EmbeddingProvider, MockProvider};
use tmne_core::embedspace::train_ivf;
use tmne_core::eval::{
    combine_report, group_records, run_test_set, usefulness_by_method, TerMode, UsefulnessMode,
    METHOD_FMS, METHOD_NEURO,
};
use tmne_core::fixtures::{generate_fixture, Fixture, FixtureSpec, MonoPlant};
use tmne_core::fms::build_fms_index;
use tmne_core::ranker::{Engine, NeuroIndex, Origin, QueryConfig, Source};
use tmne_core::scorer::LexicalScorer;

fn engine(fx: &Fixture) -> Engine {
    let lexicon = Arc::new(fx.lexicon.clone());
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(MockProvider::new(64, 13, Some(lexicon.clone())).unwrap());
    let tm_targets: Vec<String> = fx.tm.iter().map(|t| t.target.clone()).collect();
    let tm_m = embed_matrix(provider.as_ref(), fx.tm.iter().map(|t| t.id).collect(), &tm_targets).unwrap();
    let mono_texts: Vec<String> = fx.mono.iter().map(|m| m.text.clone()).collect();
    let mono_m = embed_matrix(provider.as_ref(), fx.mono.iter().map(|m| m.id).collect(), &mono_texts).unwrap();
    let tm_ivf = train_ivf(&tm_m, 16, 13).unwrap();
    let mono_ivf = train_ivf(&mono_m, 24, 13).unwrap();
    Engine {
        fms_index: Some(build_fms_index(&fx.tm, Tokenizer::default()).unwrap()),
        tm: fx.tm.iter().map(|t| (t.id, t.clone())).collect(),
        tm_neuro: Some(NeuroIndex::new(tm_m, Some(tm_ivf)).unwrap()),
        mono: fx.mono.iter().map(|m| (m.id, m.clone())).collect(),
        mono_neuro: Some(NeuroIndex::new(mono_m, Some(mono_ivf)).unwrap()),
        provider: Some(provider),
        scorer: Some(Arc::new(LexicalScorer::new(lexicon))),
    }
}

fn only(s: Source) -> QueryConfig {
    QueryConfig {
        sources: BTreeSet::from([s]),
        ..QueryConfig::default()
    }
}

fn word_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

#[test]
fn planted_tm_near_matches_are_all_found() {
    let fx = generate_fixture(&FixtureSpec::default()).unwrap();
    let engine = engine(&fx);
    let cfg = only(Source::TmFms);
    let mut planted = 0;
    for g in &fx.truth {
        let Some(id) = g.tm_match else { continue };
        planted += 1;
        let q = &fx.test[g.test_id as usize].source;
        let got = engine.gather(q, &cfg).unwrap();
        let hit = got.iter().find(|p| p.origin_id == id).unwrap_or_else(|| panic!("missed TU {id} for `{q}`"));
        let a = tokenize(q).into_tokens();
        let b = tokenize(&fx.tm[id as usize].source).into_tokens();
        let want = 1.0 - word_distance(&a, &b) as f64 / a.len().max(b.len()) as f64;
        assert!(want >= 0.6);
        assert_eq!(hit.retrieval_score, want);
        assert_eq!(hit.target_text, fx.tm[id as usize].target);
    }
    assert_eq!(planted, 40);
}

#[test]
fn exact_mono_references_rank_first() {
    let fx = generate_fixture(&FixtureSpec::default()).unwrap();
    let engine = engine(&fx);
    let cfg = only(Source::MonoNeuro);
    let mut exact = 0;
    for g in &fx.truth {
        let Some((id, MonoPlant::Exact)) = g.mono_match else { continue };
        exact += 1;
        let test = &fx.test[g.test_id as usize];
        let top = &engine.query(&test.source, &cfg).unwrap()[0];
        assert_eq!((top.origin, top.origin_id), (Origin::Mono, id));
        assert_eq!(top.target_text, test.reference);
        assert!((top.retrieval_score - 1.0).abs() < 1e-5, "{}", top.retrieval_score);
    }
    assert_eq!(exact, 30);
}

#[test]
fn embedding_matches_beat_fuzzy_matches() {
    let fx = generate_fixture(&FixtureSpec::default()).unwrap();
    let engine = engine(&fx);
    let out = run_test_set(&engine, &fx.test, &QueryConfig::default()).unwrap();
    let groups = group_records(&out.records);
    assert_eq!(groups.len(), fx.test.len());
    let thresholds = [0.4, 0.3, 0.2, 0.1];
    let reports =
        usefulness_by_method(&groups, &thresholds, UsefulnessMode::Top1, TerMode::Shifts, &Tokenizer::default())
            .unwrap();
    let pct = |m: &str| -> Vec<f64> { reports[m].rows.iter().map(|r| r.percentage).collect() };
    let (f, n) = (pct(METHOD_FMS), pct(METHOD_NEURO));
    assert!(n[0] - f[0] >= 20.0, "fms {f:?} neuro {n:?}");
    for p in [&f, &n] {
        assert!(p.windows(2).all(|w| w[0] >= w[1]), "{p:?}");
    }
    // every exact mono plant gives a zero-TER top proposal
    assert!(reports[METHOD_NEURO].rows[3].useful >= 30);

    let c = combine_report(&groups, METHOD_FMS, METHOD_NEURO, TerMode::Shifts, &Tokenizer::default()).unwrap();
    assert!(c.records > 0);
    assert!(c.oracle.total <= c.combined.total);
    assert!(c.combined.total <= c.fms.total.min(c.neuro.total) + 0.05);
}
