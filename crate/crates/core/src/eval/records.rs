//! Evaluation records: the proposals each method returned for each test
//! sentence, and the reports computed from them.
//!
//! Record file, one header line then one row per proposal in rank order:
//! `query<TAB>reference<TAB>proposal<TAB>method<TAB>retrieval_score<TAB>estimated_fms`.
//! A row with an empty proposal means the method found nothing.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{correlate, CorrelationReport};
use super::ter::{mean_ter, ter, total_ter, TerBreakdown, TerMode};
use super::usefulness::{oracle_combine, usefulness, UsefulnessReport};
use crate::corpus::{TestPair, Tokenizer};
use crate::error::{Error, Result};
use crate::fms::fms_with;
use crate::ranker::{attach_scores, rank_and_filter, Engine, Origin, Proposal, QueryConfig, Source};

pub const RECORD_COLUMNS: [&str; 6] = [
    "query",
    "reference",
    "proposal",
    "method",
    "retrieval_score",
    "estimated_fms",
];
pub const METHOD_FMS: &str = "fms";
pub const METHOD_NEURO: &str = "neuro";
/// TER below which a proposal counts as useful when selecting the records
/// a combination is evaluated on.
pub const USEFUL_TER: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub query: String,
    pub reference: String,
    pub proposal: Option<String>,
    pub method: String,
    pub retrieval_score: Option<f64>,
    pub estimated_fms: Option<f64>,
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records(mut out: impl Write, records: &[EvalRecord]) -> Result<()> {
    writeln!(out, "{}", RECORD_COLUMNS.join("\t"))?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.query,
            r.reference,
            r.proposal.as_deref().unwrap_or(""),
            r.method,
            opt_num(r.retrieval_score),
            opt_num(r.estimated_fms)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(input: impl BufRead) -> Result<Vec<EvalRecord>> {
    const WHAT: &str = "record file";
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format(WHAT, "empty file"))?;
    check_header(&header, &RECORD_COLUMNS, WHAT)?;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = n + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != RECORD_COLUMNS.len() {
            return Err(Error::format(
                WHAT,
                format!("line {line_no}: expected 6 columns, found {}", cols.len()),
            ));
        }
        let num = |i: usize| -> Result<Option<f64>> {
            if cols[i].is_empty() {
                return Ok(None);
            }
            cols[i].parse().map(Some).map_err(|_| {
                Error::format(
                    WHAT,
                    format!("line {line_no}: column `{}` is not a number", RECORD_COLUMNS[i]),
                )
            })
        };
        out.push(EvalRecord {
            query: cols[0].to_string(),
            reference: cols[1].to_string(),
            proposal: (!cols[2].is_empty()).then(|| cols[2].to_string()),
            method: cols[3].to_string(),
            retrieval_score: num(4)?,
            estimated_fms: num(5)?,
        });
    }
    Ok(out)
}

fn check_header(header: &str, expected: &[&str], what: &'static str) -> Result<()> {
    let found: Vec<&str> = header.split('\t').collect();
    for (i, want) in expected.iter().enumerate() {
        match found.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(Error::format(
                    what,
                    format!("column {}: expected `{want}`, found `{got}`", i + 1),
                ))
            }
            None => return Err(Error::format(what, format!("missing column `{want}`"))),
        }
    }
    if found.len() > expected.len() {
        return Err(Error::format(
            what,
            format!("unexpected column `{}`", found[expected.len()]),
        ));
    }
    Ok(())
}

/// All records of one test sentence, proposals grouped by method in rank
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query: String,
    pub reference: String,
    pub methods: BTreeMap<String, Vec<EvalRecord>>,
}

impl QueryGroup {
    pub fn top(&self, method: &str) -> Option<&EvalRecord> {
        self.methods.get(method).and_then(|v| v.first())
    }
}

/// Group by (query, reference) in order of first appearance.
pub fn group_records(records: &[EvalRecord]) -> Vec<QueryGroup> {
    let mut index: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut groups: Vec<QueryGroup> = Vec::new();
    for r in records {
        let g = *index.entry((&r.query, &r.reference)).or_insert_with(|| {
            groups.push(QueryGroup {
                query: r.query.clone(),
                reference: r.reference.clone(),
                methods: BTreeMap::new(),
            });
            groups.len() - 1
        });
        let list = groups[g].methods.entry(r.method.clone()).or_default();
        if r.proposal.is_some() {
            list.push(r.clone());
        }
    }
    groups
}

/// (true FMS of the TM source, estimated score, cosine) for one proposal
/// retrieved from TM targets by embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub fms: f64,
    pub neurofms: f64,
    pub cosine: f64,
}

pub const CORRELATION_COLUMNS: [&str; 3] = ["fms", "neurofms", "cosine"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<EvalRecord>,
    pub correlation: Vec<CorrelationRow>,
}

fn to_records(pair: &TestPair, method: &str, proposals: &[Proposal]) -> Vec<EvalRecord> {
    let row = |p: Option<&Proposal>| EvalRecord {
        query: pair.source.clone(),
        reference: pair.reference.clone(),
        proposal: p.map(|p| p.target_text.clone()),
        method: method.to_string(),
        retrieval_score: p.map(|p| p.retrieval_score),
        estimated_fms: p.and_then(|p| p.estimated_fms),
    };
    if proposals.is_empty() {
        vec![row(None)]
    } else {
        proposals.iter().map(|p| row(Some(p))).collect()
    }
}

/// Run both methods over a test set. The fuzzy-match method keeps the FMS
/// order of its matches; the embedding method (TM targets and monolingual
/// sentences) is thresholded and ranked by estimated score.
pub fn run_test_set(engine: &Engine, tests: &[TestPair], config: &QueryConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let scorer = engine.scorer()?;
    let fms_sources: std::collections::BTreeSet<Source> =
        config.sources.iter().copied().filter(|s| *s == Source::TmFms).collect();
    let neuro_sources: std::collections::BTreeSet<Source> =
        config.sources.iter().copied().filter(|s| *s != Source::TmFms).collect();
    let tokenizer = engine.fms_index.as_ref().map(|i| i.tokenizer()).unwrap_or_default();

    let per_query: Vec<(Vec<EvalRecord>, Vec<CorrelationRow>)> = tests
        .par_iter()
        .map(|pair| {
            let mut records = Vec::new();
            let mut corr = Vec::new();
            if !fms_sources.is_empty() {
                let cfg = QueryConfig {
                    sources: fms_sources.clone(),
                    ..config.clone()
                };
                let got = attach_scores(engine.gather(&pair.source, &cfg)?, scorer, &pair.source)?;
                records.extend(to_records(pair, METHOD_FMS, &got));
            }
            if !neuro_sources.is_empty() {
                let cfg = QueryConfig {
                    sources: neuro_sources.clone(),
                    ..config.clone()
                };
                let got = attach_scores(engine.gather(&pair.source, &cfg)?, scorer, &pair.source)?;
                let q = tokenizer.tokenize(&pair.source);
                for p in got.iter().filter(|p| p.origin == Origin::Tm) {
                    let src = tokenizer.tokenize(p.tm_source_text.as_deref().unwrap_or_default());
                    if let Ok(f) = fms_with(&q, &src, config.fms_normalization) {
                        corr.push(CorrelationRow {
                            fms: f,
                            neurofms: p.estimated_fms.expect("scored"),
                            cosine: p.retrieval_score,
                        });
                    }
                }
                let ranked = rank_and_filter(got, &cfg)?;
                records.extend(to_records(pair, METHOD_NEURO, &ranked));
            }
            Ok((records, corr))
        })
        .collect::<Result<_>>()?;

    let mut out = PipelineOutput::default();
    for (r, c) in per_query {
        out.records.extend(r);
        out.correlation.extend(c);
    }
    Ok(out)
}

pub fn write_correlation_table(mut out: impl Write, rows: &[CorrelationRow]) -> Result<()> {
    writeln!(out, "{}", CORRELATION_COLUMNS.join("\t"))?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.fms, r.neurofms, r.cosine)?;
    }
    out.flush()?;
    Ok(())
}

/// Correlation of `gold` with every other column of a headed numeric TSV.
pub fn correlate_table(input: impl BufRead, gold: &str) -> Result<Vec<(String, CorrelationReport)>> {
    const WHAT: &str = "correlation table";
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format(WHAT, "empty file"))?;
    let names: Vec<String> = header.split('\t').map(str::to_string).collect();
    let g = names
        .iter()
        .position(|n| n == gold)
        .ok_or_else(|| Error::format(WHAT, format!("missing column `{gold}`")))?;
    if names.len() < 2 {
        return Err(Error::format(WHAT, "need a gold column and at least one estimator"));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != names.len() {
            return Err(Error::format(
                WHAT,
                format!("line {}: expected {} columns, found {}", n + 2, names.len(), cells.len()),
            ));
        }
        for (i, c) in cells.iter().enumerate() {
            columns[i].push(c.parse().map_err(|_| {
                Error::format(WHAT, format!("line {}: column `{}` is not a number", n + 2, names[i]))
            })?);
        }
    }
    names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != g)
        .map(|(i, name)| Ok((name.clone(), correlate(&columns[g], &columns[i])?)))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum UsefulnessMode {
    /// Only the first proposal of each method counts.
    #[default]
    Top1,
    /// Any proposal of the method may be the useful one.
    Any,
}

impl std::str::FromStr for UsefulnessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(UsefulnessMode::Top1),
            "any" => Ok(UsefulnessMode::Any),
            _ => Err(Error::Config(format!("unknown usefulness mode `{s}` (top1, any)"))),
        }
    }
}

fn ter_of(tokenizer: &Tokenizer, hyp: Option<&str>, reference: &str, mode: TerMode) -> Result<TerBreakdown> {
    let r = tokenizer.tokenize(reference);
    let h = tokenizer.tokenize(hyp.unwrap_or(""));
    ter(&h, &r, mode)
}

/// Usefulness per method present in the records.
pub fn usefulness_by_method(
    groups: &[QueryGroup],
    thresholds: &[f64],
    mode: UsefulnessMode,
    ter_mode: TerMode,
    tokenizer: &Tokenizer,
) -> Result<BTreeMap<String, UsefulnessReport>> {
    let methods: std::collections::BTreeSet<&String> =
        groups.iter().flat_map(|g| g.methods.keys()).collect();
    let mut out = BTreeMap::new();
    for method in methods {
        let best: Vec<Option<f64>> = groups
            .par_iter()
            .map(|g| {
                let props = g.methods.get(method).map(Vec::as_slice).unwrap_or_default();
                let take = match mode {
                    UsefulnessMode::Top1 => props.len().min(1),
                    UsefulnessMode::Any => props.len(),
                };
                let mut best: Option<f64> = None;
                for p in &props[..take] {
                    let t = ter_of(tokenizer, p.proposal.as_deref(), &g.reference, ter_mode)?.score;
                    best = Some(best.map_or(t, |b: f64| b.min(t)));
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        out.insert(method.clone(), usefulness(&best, thresholds)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTer {
    pub total: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombineReport {
    /// Records where either method's top proposal has TER below 0.4.
    pub records: usize,
    pub fms: MethodTer,
    pub neuro: MethodTer,
    pub combined: MethodTer,
    pub oracle: MethodTer,
}

/// Total TER of each method's top proposal, of the estimate-based choice
/// between them (higher estimate wins, ties go to the fuzzy match) and of
/// the reference-based oracle. A missing proposal is scored as an empty
/// hypothesis.
pub fn combine_report(
    groups: &[QueryGroup],
    fms_method: &str,
    neuro_method: &str,
    ter_mode: TerMode,
    tokenizer: &Tokenizer,
) -> Result<CombineReport> {
    type Row = (TerBreakdown, TerBreakdown, TerBreakdown);
    let rows: Vec<Option<Row>> = groups
        .par_iter()
        .map(|g| {
            let (f, n) = (g.top(fms_method), g.top(neuro_method));
            let ft = ter_of(tokenizer, f.and_then(|r| r.proposal.as_deref()), &g.reference, ter_mode)?;
            let nt = ter_of(tokenizer, n.and_then(|r| r.proposal.as_deref()), &g.reference, ter_mode)?;
            if !(ft.score < USEFUL_TER || nt.score < USEFUL_TER) {
                return Ok(None);
            }
            let est = |r: &EvalRecord| {
                r.estimated_fms.ok_or_else(|| {
                    Error::format("record file", format!("proposal for `{}` lacks estimated_fms", r.query))
                })
            };
            let ct = match (f, n) {
                (Some(f), Some(n)) if est(n)? > est(f)? => nt,
                (Some(_), _) => ft,
                (None, _) => nt,
            };
            Ok(Some((ft, nt, ct)))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Row> = rows.into_iter().flatten().collect();
    if rows.is_empty() {
        return Err(Error::Degenerate("no record has a useful proposal".into()));
    }
    let summarize = |items: Vec<TerBreakdown>| -> Result<MethodTer> {
        Ok(MethodTer {
            total: total_ter(&items)?,
            mean: mean_ter(&items)?,
        })
    };
    let oracle_pairs: Vec<Vec<Option<TerBreakdown>>> =
        rows.iter().map(|r| vec![Some(r.0), Some(r.1)]).collect();
    let oracle_picks: Vec<TerBreakdown> = rows
        .iter()
        .map(|r| if r.0.score <= r.1.score { r.0 } else { r.1 })
        .collect();
    Ok(CombineReport {
        records: rows.len(),
        fms: summarize(rows.iter().map(|r| r.0).collect())?,
        neuro: summarize(rows.iter().map(|r| r.1).collect())?,
        combined: summarize(rows.iter().map(|r| r.2).collect())?,
        oracle: MethodTer {
            total: oracle_combine(&oracle_pairs)?,
            mean: mean_ter(&oracle_picks)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(q: &str, r: &str, p: Option<&str>, m: &str, est: Option<f64>) -> EvalRecord {
        EvalRecord {
            query: q.into(),
            reference: r.into(),
            proposal: p.map(str::to_string),
            method: m.into(),
            retrieval_score: p.map(|_| 0.5),
            estimated_fms: est,
        }
    }

    #[test]
    fn record_file_round_trip() {
        let rs = vec![
            rec("q1", "a b", Some("a b"), "fms", Some(0.9)),
            rec("q1", "a b", None, "neuro", None),
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &rs).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), rs);
    }

    #[test]
    fn schema_errors_name_the_column() {
        let e = read_records("query\treference\tprop\tmethod\tretrieval_score\testimated_fms\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(e.contains("`proposal`"), "{e}");
        let e = read_records(
            "query\treference\tproposal\tmethod\tretrieval_score\testimated_fms\nq\tr\tp\tm\tx\t\n".as_bytes(),
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("retrieval_score"), "{e}");
        let e = read_records("query\treference\n".as_bytes()).unwrap_err().to_string();
        assert!(e.contains("missing column `proposal`"), "{e}");
    }

    #[test]
    fn usefulness_modes() {
        let rs = vec![
            rec("q1", "a b c d", Some("x y z w"), "neuro", Some(0.9)),
            rec("q1", "a b c d", Some("a b c d"), "neuro", Some(0.8)),
            rec("q2", "e f g h", None, "neuro", None),
        ];
        let g = group_records(&rs);
        assert_eq!(g.len(), 2);
        let tok = Tokenizer::default();
        let top = usefulness_by_method(&g, &[0.4], UsefulnessMode::Top1, TerMode::Shifts, &tok).unwrap();
        assert_eq!(top["neuro"].rows[0].useful, 0);
        let any = usefulness_by_method(&g, &[0.4], UsefulnessMode::Any, TerMode::Shifts, &tok).unwrap();
        assert_eq!(any["neuro"].rows[0].useful, 1);
        assert_eq!(any["neuro"].rows[0].total, 2);
    }

    #[test]
    fn combine_ties_equal_both_methods() {
        let rs = vec![
            rec("q1", "a b c d", Some("a b c x"), "fms", Some(0.7)),
            rec("q1", "a b c d", Some("a b c x"), "neuro", Some(0.7)),
            rec("q2", "e f g h", Some("e f g h"), "fms", Some(0.9)),
            rec("q2", "e f g h", Some("e f g h"), "neuro", Some(0.9)),
        ];
        let r = combine_report(&group_records(&rs), "fms", "neuro", TerMode::Shifts, &Tokenizer::default()).unwrap();
        assert_eq!(r.records, 2);
        assert_eq!(r.fms.total, 1.0 / 8.0);
        assert_eq!(r.fms, r.neuro);
        assert_eq!(r.combined, r.fms);
        assert_eq!(r.oracle, r.fms);
    }

    #[test]
    fn combine_picks_by_estimate() {
        let rs = vec![
            rec("q1", "a b c d", Some("a b c d"), "fms", Some(0.6)),
            rec("q1", "a b c d", Some("x y c d"), "neuro", Some(0.8)),
            rec("q2", "e f g h", None, "fms", None),
            rec("q2", "e f g h", Some("e f g h"), "neuro", Some(0.9)),
            // neither useful: excluded
            rec("q3", "i j k l", Some("m n o p"), "fms", Some(0.9)),
            rec("q3", "i j k l", None, "neuro", None),
        ];
        let r = combine_report(&group_records(&rs), "fms", "neuro", TerMode::Shifts, &Tokenizer::default()).unwrap();
        assert_eq!(r.records, 2);
        // fms: 0 + 4 (empty hypothesis) over 8
        assert_eq!(r.fms.total, 0.5);
        assert_eq!(r.neuro.total, 2.0 / 8.0);
        assert_eq!(r.combined.total, 2.0 / 8.0);
        assert_eq!(r.oracle.total, 0.0);
    }

    #[test]
    fn correlation_table_columns() {
        let text = "fms\tneurofms\tcosine\n0.1\t0.2\t0.3\n0.5\t0.4\t0.9\n0.9\t0.95\t0.1\n";
        let r = correlate_table(text.as_bytes(), "fms").unwrap();
        assert_eq!(r.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), ["neurofms", "cosine"]);
        assert_eq!(r[0].1.kendall_tau, 1.0);
        assert!(correlate_table(text.as_bytes(), "gold").is_err());
    }
}
