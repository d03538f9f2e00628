use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::Serialize;
use tmne_core::corpus::{TestPair, TranslationUnit};
use tmne_core::eval::{
    combine_report, correlate_table, group_records, pairwise_kappa, parse_annotations,
    preference_report, read_records, run_test_set, usefulness_by_method,
    write_correlation_table, write_records, CorrelationReport, PairwiseAgreement,
    PreferenceReport, TerMode, UsefulnessMode, UsefulnessReport, DEFAULT_THRESHOLDS, METHOD_FMS,
    METHOD_NEURO,
};
use tmne_core::fms::build_fms_index;
use tmne_core::scorer::{build_loo_trainset, concat_trainsets, read_trainset, write_trainset};
use tmne_core::{Error, Result};

use crate::config::Settings;
use crate::flags::{index_dir, ProviderFlags, QueryFlags, ScorerFlags, TokenizerFlags};
use crate::index::{open_index, read_corpus_file};

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Share of test sentences with a proposal under each TER threshold.
    Usefulness(UsefulnessArgs),
    /// Kendall tau and Pearson rho of a gold column against the others.
    Correlate(CorrelateArgs),
    /// Total TER of each method, the estimate-based combination and the oracle.
    Combine(CombineArgs),
    /// Preference counts and pairwise Cohen's kappa of annotation files.
    Agreement(AgreementArgs),
    /// Leave-one-out training triples (same as `trainset build`).
    Trainset(TrainsetBuildArgs),
    /// Run a test set through an index and write per-proposal records.
    Records(Box<RecordsArgs>),
}

#[derive(Subcommand, Debug)]
pub enum TrainsetCommand {
    /// For every TU, its best fuzzy match among the other TUs.
    Build(TrainsetBuildArgs),
    /// Concatenate trainset files.
    Concat(TrainsetConcatArgs),
}

#[derive(Args, Debug)]
pub struct Report {
    /// JSON instead of TSV.
    #[arg(long)]
    json: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Report {
    fn emit<T: Serialize>(&self, value: &T, tsv: String) -> Result<()> {
        let body = if self.json {
            let mut s = serde_json::to_string_pretty(value).expect("report serializes");
            s.push('\n');
            s
        } else {
            tsv
        };
        match &self.output {
            Some(p) => fs::write(p, body).map_err(|e| Error::with_path(p, e)),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct UsefulnessArgs {
    #[arg(long)]
    records: PathBuf,
    /// Comma-separated TER thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    thresholds: Vec<f64>,
    /// top1 or any.
    #[arg(long, default_value = "top1")]
    mode: UsefulnessMode,
    /// shifts or no-shifts.
    #[arg(long, default_value = "shifts")]
    ter_mode: TerMode,
    #[command(flatten)]
    tokenizer: TokenizerFlags,
    #[command(flatten)]
    report: Report,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// Headed numeric TSV.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = "fms")]
    gold: String,
    #[command(flatten)]
    report: Report,
}

#[derive(Args, Debug)]
pub struct CombineArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = METHOD_FMS)]
    fms_method: String,
    #[arg(long, default_value = METHOD_NEURO)]
    neuro_method: String,
    #[arg(long, default_value = "shifts")]
    ter_mode: TerMode,
    #[command(flatten)]
    tokenizer: TokenizerFlags,
    #[command(flatten)]
    report: Report,
}

#[derive(Args, Debug)]
pub struct AgreementArgs {
    /// One annotation file per annotator.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[command(flatten)]
    report: Report,
}

#[derive(Args, Debug)]
pub struct TrainsetBuildArgs {
    /// Ingested TM corpus.
    #[arg(long)]
    tm: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Ignore matches below this FMS.
    #[arg(long, default_value_t = 0.0)]
    min_score: f64,
    #[command(flatten)]
    tokenizer: TokenizerFlags,
}

#[derive(Args, Debug)]
pub struct TrainsetConcatArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Drop repeated triples, keeping the first.
    #[arg(long)]
    dedup: bool,
}

#[derive(Args, Debug)]
pub struct RecordsArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    /// Ingested test corpus.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Also write the fms/neurofms/cosine table of TM embedding matches.
    #[arg(long)]
    correlation: Option<PathBuf>,
    #[command(flatten)]
    query: QueryFlags,
    #[command(flatten)]
    provider: ProviderFlags,
    #[command(flatten)]
    scorer: ScorerFlags,
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::with_path(path, e))
}

fn tokenizer_settings(config: Settings, flags: &TokenizerFlags) -> Settings {
    let mut s = Settings::default();
    flags.apply(&mut s);
    config.overlay(s)
}

fn usefulness(a: UsefulnessArgs, config: Settings) -> Result<()> {
    let tokenizer = tokenizer_settings(config, &a.tokenizer).tokenizer();
    let groups = group_records(&read_records(open(&a.records)?)?);
    let reports = usefulness_by_method(&groups, &a.thresholds, a.mode, a.ter_mode, &tokenizer)?;
    let mut tsv = String::from("method\tthreshold\tuseful\ttotal\tpercent\n");
    for (method, r) in &reports {
        for row in &r.rows {
            let _ = writeln!(
                tsv,
                "{method}\t{}\t{}\t{}\t{:.2}",
                row.threshold, row.useful, row.total, row.percentage
            );
        }
    }
    a.report.emit::<BTreeMap<String, UsefulnessReport>>(&reports, tsv)
}

fn correlate(a: CorrelateArgs) -> Result<()> {
    let rows = correlate_table(open(&a.table)?, &a.gold)?;
    let mut tsv = String::from("estimator\tkendall_tau\tpearson_rho\tn\n");
    for (name, r) in &rows {
        let _ = writeln!(tsv, "{name}\t{:.4}\t{:.4}\t{}", r.kendall_tau, r.pearson_rho, r.n);
    }
    let map: BTreeMap<String, CorrelationReport> = rows.into_iter().collect();
    a.report.emit(&map, tsv)
}

fn combine(a: CombineArgs, config: Settings) -> Result<()> {
    let tokenizer = tokenizer_settings(config, &a.tokenizer).tokenizer();
    let groups = group_records(&read_records(open(&a.records)?)?);
    let r = combine_report(&groups, &a.fms_method, &a.neuro_method, a.ter_mode, &tokenizer)?;
    let mut tsv = format!("records\t{}\nmethod\ttotal_ter\tmean_ter\n", r.records);
    for (name, m) in [
        (a.fms_method.as_str(), &r.fms),
        (a.neuro_method.as_str(), &r.neuro),
        ("combined", &r.combined),
        ("oracle", &r.oracle),
    ] {
        let _ = writeln!(tsv, "{name}\t{:.4}\t{:.4}", m.total, m.mean);
    }
    a.report.emit(&r, tsv)
}

#[derive(Serialize)]
struct AgreementReport {
    preferences: BTreeMap<String, PreferenceReport>,
    pairwise: Vec<PairwiseAgreement>,
}

fn agreement(a: AgreementArgs) -> Result<()> {
    let mut annotators = Vec::new();
    for path in &a.files {
        let ann = parse_annotations(open(path)?)?;
        for s in &ann.skips.skipped {
            eprintln!("{}:{}: skipped: {}", path.display(), s.line, s.reason);
        }
        annotators.push((path.display().to_string(), ann.rows));
    }
    let preferences: BTreeMap<String, PreferenceReport> = annotators
        .iter()
        .map(|(name, rows)| (name.clone(), preference_report(rows)))
        .collect();
    let pairwise = pairwise_kappa(&annotators);

    let mut tsv = String::from("annotator\tneuro_better\tfms_better\tequal\tneither\tscorer_agreement\n");
    for (name, p) in &preferences {
        let agree = p.scorer_agreement.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            tsv,
            "{name}\t{}\t{}\t{}\t{}\t{agree}",
            p.neuro_better, p.fms_better, p.equal, p.neither
        );
    }
    tsv.push_str("first\tsecond\tshared\tkappa\n");
    for p in &pairwise {
        let kappa = p
            .agreement
            .as_ref()
            .map(|m| format!("{:.4}", m.kappa))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(tsv, "{}\t{}\t{}\t{kappa}", p.first, p.second, p.shared);
    }
    a.report.emit(&AgreementReport { preferences, pairwise }, tsv)
}

fn trainset_build(a: TrainsetBuildArgs, config: Settings) -> Result<()> {
    let tokenizer = tokenizer_settings(config, &a.tokenizer).tokenizer();
    let tm: Vec<TranslationUnit> = read_corpus_file(&a.tm)?;
    let index = build_fms_index(&tm, tokenizer)?;
    let set = build_loo_trainset(&tm, &index, a.min_score)?;
    let mut buf = Vec::new();
    write_trainset(&mut buf, &set.triples)?;
    fs::write(&a.output, buf).map_err(|e| Error::with_path(&a.output, e))?;
    println!("{} triples, {} TUs without a match", set.triples.len(), set.skipped);
    Ok(())
}

fn trainset_concat(a: TrainsetConcatArgs) -> Result<()> {
    let sets = a
        .inputs
        .iter()
        .map(|p| read_trainset(open(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let all = concat_trainsets(sets, a.dedup);
    let mut buf = Vec::new();
    write_trainset(&mut buf, &all)?;
    fs::write(&a.output, buf).map_err(|e| Error::with_path(&a.output, e))?;
    println!("{} triples", all.len());
    Ok(())
}

fn records(a: RecordsArgs, config: Settings) -> Result<()> {
    let mut flags = Settings::default();
    a.query.apply(&mut flags);
    a.provider.apply(&mut flags);
    a.scorer.apply(&mut flags);
    let dir = index_dir(a.index.clone(), &config)?;
    let tests: Vec<TestPair> = read_corpus_file(&a.test)?;
    let loaded = open_index(&dir, config, flags)?;
    let cfg = loaded.settings.query()?;
    let out = run_test_set(&loaded.engine, &tests, &cfg)?;
    let mut buf = Vec::new();
    write_records(&mut buf, &out.records)?;
    fs::write(&a.output, buf).map_err(|e| Error::with_path(&a.output, e))?;
    if let Some(path) = &a.correlation {
        let mut buf = Vec::new();
        write_correlation_table(&mut buf, &out.correlation)?;
        fs::write(path, buf).map_err(|e| Error::with_path(path, e))?;
    }
    println!(
        "{} test sentences, {} records, {} correlation rows",
        tests.len(),
        out.records.len(),
        out.correlation.len()
    );
    Ok(())
}

pub fn run(cmd: EvalCommand, config: Settings) -> anyhow::Result<()> {
    match cmd {
        EvalCommand::Usefulness(a) => usefulness(a, config)?,
        EvalCommand::Correlate(a) => correlate(a)?,
        EvalCommand::Combine(a) => combine(a, config)?,
        EvalCommand::Agreement(a) => agreement(a)?,
        EvalCommand::Trainset(a) => trainset_build(a, config)?,
        EvalCommand::Records(a) => records(*a, config)?,
    }
    Ok(())
}

pub fn run_trainset(cmd: TrainsetCommand, config: Settings) -> anyhow::Result<()> {
    match cmd {
        TrainsetCommand::Build(a) => trainset_build(a, config)?,
        TrainsetCommand::Concat(a) => trainset_concat(a)?,
    }
    Ok(())
}
