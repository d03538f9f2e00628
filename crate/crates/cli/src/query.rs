use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use clap::Args;
use tmne_core::embedprovider::open_provider;
use tmne_core::ranker::{proposals_json, Origin, Proposal, RetrievalKind};
use tmne_core::Error;

use crate::config::Settings;
use crate::flags::{index_dir, ProviderFlags, QueryFlags, ScorerFlags};
use crate::index::open_index;

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// Source sentence; omit with --stdin.
    text: Option<String>,
    /// Read one query per line from stdin.
    #[arg(long, conflicts_with = "text")]
    stdin: bool,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Print the JSON proposal array instead of a table.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    query: QueryFlags,
    #[command(flatten)]
    provider: ProviderFlags,
    #[command(flatten)]
    scorer: ScorerFlags,
}

fn print_table(out: &mut impl Write, proposals: &[Proposal]) -> io::Result<()> {
    if proposals.is_empty() {
        return writeln!(out, "(no proposals)");
    }
    writeln!(out, "{:>3}  {:<4}  {:>6}  {:<5}  {:>9}  {:>7}  target", "#", "from", "id", "kind", "retrieval", "est_fms")?;
    for (i, p) in proposals.iter().enumerate() {
        let origin = match p.origin {
            Origin::Tm => "TM",
            Origin::Mono => "MONO",
        };
        let kind = match p.retrieval_kind {
            RetrievalKind::Fms => "fms",
            RetrievalKind::Neuro => "neuro",
        };
        let est = p.estimated_fms.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:>3}  {:<4}  {:>6}  {:<5}  {:>9.4}  {:>7}  {}",
            i + 1,
            origin,
            p.origin_id,
            kind,
            p.retrieval_score,
            est,
            p.target_text
        )?;
    }
    Ok(())
}

pub fn run(args: QueryArgs, config: Settings) -> anyhow::Result<()> {
    let mut flags = Settings::default();
    args.query.apply(&mut flags);
    args.provider.apply(&mut flags);
    args.scorer.apply(&mut flags);
    let dir = index_dir(args.index.clone(), &config)?;

    let queries: Vec<String> = match (&args.text, args.stdin) {
        (Some(t), false) => vec![t.clone()],
        (None, true) => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .collect(),
        _ => return Err(Error::Config("pass a query or --stdin".into()).into()),
    };

    let loaded = open_index(&dir, config, flags)?;
    let cfg = loaded.settings.query()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, q) in queries.iter().enumerate() {
        let proposals = loaded.engine.query(q, &cfg)?;
        if args.json {
            writeln!(out, "{}", proposals_json(&proposals))?;
        } else {
            if queries.len() > 1 {
                if i > 0 {
                    writeln!(out)?;
                }
                writeln!(out, "query: {q}")?;
            }
            print_table(&mut out, &proposals)?;
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Take the provider recorded in this index.
    #[arg(long)]
    index: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderFlags,
}

pub fn embed(args: EmbedArgs, config: Settings) -> anyhow::Result<()> {
    let mut flags = Settings::default();
    args.provider.apply(&mut flags);
    let base = match &args.index {
        Some(dir) => crate::index::Manifest::read(dir)?.settings(dir)?,
        None => Settings::default(),
    };
    let settings = base.overlay(config).overlay(flags);
    let pc = settings
        .provider()?
        .ok_or_else(|| Error::Config("no embedding provider configured".into()))?;
    let provider = open_provider(&pc)?;
    let texts: Vec<String> = io::stdin().lock().lines().collect::<io::Result<_>>()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for chunk in texts.chunks(pc.batch_size) {
        for v in provider.embed(chunk)? {
            writeln!(out, "{}", serde_json::to_string(&v)?)?;
        }
    }
    Ok(())
}
