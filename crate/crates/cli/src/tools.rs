use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use tmne_core::embedprovider::{Lexicon, DEFAULT_MOCK_DIM};
use tmne_core::fixtures::{generate_fixture, FixtureSpec};
use tmne_core::protocol::{serve, serve_tcp, MockBackend};
use tmne_core::Error;

use crate::config::Settings;
use crate::flags::{ProviderFlags, TokenizerFlags};
use crate::index::{build_index, BuildRequest};

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Ingested TM corpus.
    #[arg(long)]
    tm: PathBuf,
    /// Ingested monolingual corpus.
    #[arg(long)]
    mono: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// IVF partitions (default: ceil(sqrt(count))).
    #[arg(long)]
    nlist: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    tokenizer: TokenizerFlags,
    #[command(flatten)]
    provider: ProviderFlags,
}

pub fn build(args: BuildArgs, config: Settings) -> anyhow::Result<()> {
    let mut flags = Settings {
        nlist: args.nlist,
        seed: args.seed,
        ..Settings::default()
    };
    args.tokenizer.apply(&mut flags);
    args.provider.apply(&mut flags);
    let req = BuildRequest {
        tm: args.tm,
        mono: args.mono,
        out: args.out,
        settings: config.overlay(flags),
    };
    let m = build_index(&req)?;
    println!("tm: {} units, mono: {} sentences", m.counts.tm, m.counts.mono);
    match &m.provider {
        Some(p) => println!("embeddings: {} dim {} ({} files)", p.kind, p.dim, m.files.len()),
        None => println!("embeddings: none (no provider configured)"),
    }
    println!("wrote {}", req.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    lexicon_size: Option<usize>,
    #[arg(long)]
    tm_size: Option<usize>,
    #[arg(long)]
    mono_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    mono_reference_rate: Option<f64>,
    #[arg(long)]
    tm_near_match_rate: Option<f64>,
}

pub fn fixture(a: FixtureArgs) -> anyhow::Result<()> {
    let d = FixtureSpec::default();
    let spec = FixtureSpec {
        seed: a.seed.unwrap_or(d.seed),
        vocab_size: a.vocab_size.unwrap_or(d.vocab_size),
        lexicon_size: a.lexicon_size.unwrap_or(d.lexicon_size),
        tm_size: a.tm_size.unwrap_or(d.tm_size),
        mono_size: a.mono_size.unwrap_or(d.mono_size),
        test_size: a.test_size.unwrap_or(d.test_size),
        mono_reference_rate: a.mono_reference_rate.unwrap_or(d.mono_reference_rate),
        tm_near_match_rate: a.tm_near_match_rate.unwrap_or(d.tm_near_match_rate),
    };
    let fx = generate_fixture(&spec)?;
    fx.write_to_dir(&a.out)?;
    let tm_plants = fx.truth.iter().filter(|g| g.tm_match.is_some()).count();
    let mono_plants = fx.truth.iter().filter(|g| g.mono_match.is_some()).count();
    println!(
        "{} TUs, {} mono, {} test pairs; planted {} TM near matches, {} mono references",
        fx.tm.len(),
        fx.mono.len(),
        fx.test.len(),
        tm_plants,
        mono_plants
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct MockBridgeArgs {
    /// Listen on this address instead of speaking over stdio.
    #[arg(long)]
    tcp: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MOCK_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

pub fn mock_bridge(a: MockBridgeArgs) -> anyhow::Result<()> {
    let lexicon = a.lexicon.as_deref().map(Lexicon::load).transpose()?.map(Arc::new);
    let backend = MockBackend {
        dim: a.dim,
        seed: a.seed,
        lexicon,
    };
    match a.tcp {
        Some(addr) => {
            let listener = TcpListener::bind(&addr)
                .map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
            println!("listening on {}", listener.local_addr()?);
            use std::io::Write;
            io::stdout().flush()?;
            serve_tcp(backend, listener)?;
        }
        None => serve(&backend, BufReader::new(io::stdin().lock()), io::stdout().lock())?,
    }
    Ok(())
}
