use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use tmne_core::corpus::{
    exclude_overlap, filter_test_set, parse_mono, parse_test_set, parse_tm, read_corpus,
    write_corpus, CorpusKind, CorpusRecord, MonoSentence, Parsed, TestPair, TmFormat,
    TmxLanguages, TranslationUnit,
};
use tmne_core::{Error, Result};

use crate::config::Settings;
use crate::flags::TokenizerFlags;

/// Above this share of malformed rows the input is rejected.
pub const MAX_SKIP_RATE: f64 = 0.5;
const SHOWN_SKIPS: usize = 10;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Tm,
    Mono,
    Test,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Format {
    #[default]
    Tsv,
    Tmx,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// TMX source language (default: first tuv).
    #[arg(long)]
    src_lang: Option<String>,
    /// TMX target language (default: second tuv).
    #[arg(long)]
    tgt_lang: Option<String>,
    /// Drop test pairs whose document id occurs in these corpus files.
    #[arg(long, value_name = "CORPUS")]
    exclude_overlap: Vec<PathBuf>,
    #[command(flatten)]
    tokenizer: TokenizerFlags,
}

fn check_skips<T>(parsed: &Parsed<T>, path: &Path) -> Result<()> {
    for s in parsed.skips.skipped.iter().take(SHOWN_SKIPS) {
        eprintln!("{}:{}: skipped: {}", path.display(), s.line, s.reason);
    }
    if parsed.skips.count() > SHOWN_SKIPS {
        eprintln!("... {} more skipped rows", parsed.skips.count() - SHOWN_SKIPS);
    }
    if parsed.skip_rate() > MAX_SKIP_RATE {
        return Err(Error::Format {
            what: "corpus",
            detail: format!(
                "{}: {} of {} rows malformed",
                path.display(),
                parsed.skips.count(),
                parsed.rows
            ),
        });
    }
    Ok(())
}

/// Document ids of any stored corpus, whatever its kind.
fn doc_ids(path: &Path) -> Result<HashSet<String>> {
    let data = fs::read(path).map_err(|e| Error::with_path(path, e))?;
    let mut first = String::new();
    data.as_slice().read_line(&mut first)?;
    let kind: CorpusKind = first
        .split_whitespace()
        .nth(2)
        .ok_or_else(|| Error::Format {
            what: "corpus",
            detail: format!("{}: missing header", path.display()),
        })?
        .parse()?;
    let ids = match kind {
        CorpusKind::Tm => read_corpus::<TranslationUnit>(data.as_slice())?
            .into_iter()
            .filter_map(|r| r.doc_id)
            .collect(),
        CorpusKind::Mono => read_corpus::<MonoSentence>(data.as_slice())?
            .into_iter()
            .filter_map(|r| r.doc_id)
            .collect(),
        CorpusKind::Test => read_corpus::<TestPair>(data.as_slice())?
            .into_iter()
            .filter_map(|r| r.doc_id)
            .collect(),
    };
    Ok(ids)
}

fn save<T: CorpusRecord>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, records)?;
    fs::write(path, buf).map_err(|e| Error::with_path(path, e))
}

pub fn run(args: IngestArgs, config: Settings) -> anyhow::Result<()> {
    let mut flags = Settings::default();
    args.tokenizer.apply(&mut flags);
    let tokenizer = config.overlay(flags).tokenizer();

    if !matches!(args.kind, Kind::Tm) && matches!(args.format, Format::Tmx) {
        return Err(Error::Config("TMX input is only supported for --kind tm".into()).into());
    }
    if !matches!(args.kind, Kind::Test) && !args.exclude_overlap.is_empty() {
        return Err(Error::Config("--exclude-overlap applies to --kind test only".into()).into());
    }
    let input = fs::File::open(&args.input).map_err(|e| Error::with_path(&args.input, e))?;
    let input = BufReader::new(input);
    let path = args.input.as_path();

    let mut lines = Vec::new();
    let (rows, malformed, kept) = match args.kind {
        Kind::Tm => {
            let format = match args.format {
                Format::Tsv => TmFormat::Tsv,
                Format::Tmx => TmFormat::Tmx(TmxLanguages {
                    source: args.src_lang.clone(),
                    target: args.tgt_lang.clone(),
                }),
            };
            let parsed = parse_tm(input, format).with_context(|| path.display().to_string())?;
            check_skips(&parsed, path)?;
            save(&args.output, &parsed.items)?;
            (parsed.rows, parsed.skips.count(), parsed.items.len())
        }
        Kind::Mono => {
            let parsed = parse_mono(input).with_context(|| path.display().to_string())?;
            check_skips(&parsed, path)?;
            save(&args.output, &parsed.items)?;
            (parsed.rows, parsed.skips.count(), parsed.items.len())
        }
        Kind::Test => {
            let parsed = parse_test_set(input).with_context(|| path.display().to_string())?;
            check_skips(&parsed, path)?;
            let (kept, report) = filter_test_set(parsed.items, &tokenizer);
            lines.push(format!("duplicates: {}", report.duplicates));
            lines.push(format!("identical_source_reference: {}", report.identical_source_reference));
            lines.push(format!("one_word_source: {}", report.one_word_source));
            lines.push(format!("token_ratio: {}", report.token_ratio));
            let kept = if args.exclude_overlap.is_empty() {
                kept
            } else {
                let sets = args
                    .exclude_overlap
                    .iter()
                    .map(|p| doc_ids(p))
                    .collect::<Result<Vec<_>>>()?;
                let (kept, overlap) = exclude_overlap(kept, &sets);
                lines.push(format!("document_overlap: {}", overlap.removed));
                lines.push(format!("without_document_id: {}", overlap.no_id));
                kept
            };
            save(&args.output, &kept)?;
            (parsed.rows, parsed.skips.count(), kept.len())
        }
    };
    println!("rows: {rows}");
    println!("malformed: {malformed}");
    for l in lines {
        println!("{l}");
    }
    println!("kept: {kept}, {} dropped", rows - kept);
    println!("wrote {}", args.output.display());
    Ok(())
}
