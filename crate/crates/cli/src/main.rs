//! `tmne`: ingest corpora, build indices, query, serve and evaluate.
//!
//! Exit codes: 0 success, 1 internal or backend failure, 2 usage,
//! configuration or input error.

mod config;
mod eval;
mod flags;
mod index;
mod ingest;
mod query;
mod serve;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmne_core::Error;

use crate::config::Settings;

#[derive(Parser)]
#[command(name = "tmne", version, about = "Translation-memory retrieval engine")]
struct Cli {
    /// Config file (default: $TMNE_CONFIG).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and clean a corpus into the engine's corpus format.
    Ingest(ingest::IngestArgs),
    /// Build an index directory from ingested corpora.
    Build(tools::BuildArgs),
    /// Retrieve ranked proposals for a source sentence.
    Query(query::QueryArgs),
    /// Serve queries over HTTP.
    Serve(serve::ServeArgs),
    /// Evaluation reports.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Leave-one-out training sets for the score estimator.
    #[command(subcommand)]
    Trainset(eval::TrainsetCommand),
    /// Embed stdin lines with the configured provider, one JSON array per line.
    Embed(query::EmbedArgs),
    /// Write a synthetic bilingual fixture.
    Fixture(tools::FixtureArgs),
    /// Model-free bridge speaking the provider protocol.
    #[command(hide = true)]
    MockBridge(tools::MockBridgeArgs),
}

/// 2 for errors the user can fix by changing input or configuration.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::File { .. }
                | Error::Decode(_)
                | Error::Format { .. }
                | Error::Checksum(_)
                | Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::Config(_) => 2,
                Error::Io(_)
                | Error::Degenerate(_)
                | Error::Provider(_)
                | Error::Protocol(_)
                | Error::Scorer(_) => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = Settings::from_env_or(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest::run(a, config),
        Command::Build(a) => tools::build(a, config),
        Command::Query(a) => query::run(a, config),
        Command::Serve(a) => serve::run(a, config),
        Command::Eval(c) => eval::run(c, config),
        Command::Trainset(c) => eval::run_trainset(c, config),
        Command::Embed(a) => query::embed(a, config),
        Command::Fixture(a) => tools::fixture(a),
        Command::MockBridge(a) => tools::mock_bridge(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let usage = anyhow::Error::new(Error::Config("x".into())).context("while loading");
        assert_eq!(exit_code(&usage), 2);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Provider("down".into()))), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }
}
