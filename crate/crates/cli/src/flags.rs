//! Flag groups shared by several commands. Each group contributes the top
//! settings layer.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use tmne_core::corpus::TokenizerMode;
use tmne_core::embedprovider::ProviderKind;
use tmne_core::fms::Normalization;
use tmne_core::protocol::Endpoint;
use tmne_core::ranker::{parse_sources, Source};
use tmne_core::scorer::ScorerKind;

use crate::config::Settings;

fn sources(s: &str) -> tmne_core::Result<BTreeSet<Source>> {
    parse_sources(s)
}

#[derive(Args, Debug, Clone, Default)]
pub struct TokenizerFlags {
    /// simple or whitespace.
    #[arg(long = "tokenizer", id = "tokenizer_mode", value_name = "MODE")]
    pub mode: Option<TokenizerMode>,
    /// Lowercase before tokenizing.
    #[arg(long, id = "tokenizer_lowercase")]
    pub lowercase: bool,
}

impl TokenizerFlags {
    pub fn apply(&self, s: &mut Settings) {
        if self.mode.is_some() {
            s.tokenizer_mode = self.mode;
        }
        if self.lowercase {
            s.tokenizer_lowercase = Some(true);
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProviderFlags {
    /// bridge, mock or lexicon_mock.
    #[arg(long = "provider", id = "provider_kind", value_name = "KIND")]
    pub kind: Option<ProviderKind>,
    /// tcp://host:port or cmd:<program args>.
    #[arg(long = "provider-endpoint", id = "provider_endpoint", value_name = "ENDPOINT")]
    pub endpoint: Option<Endpoint>,
    #[arg(long = "dim", id = "provider_dim", value_name = "DIM")]
    pub dim: Option<usize>,
    #[arg(long = "batch-size", id = "provider_batch_size", value_name = "N")]
    pub batch_size: Option<usize>,
    /// Lexicon TSV for lexicon_mock.
    #[arg(long = "provider-lexicon", id = "provider_lexicon", value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    #[arg(long = "provider-seed", id = "provider_seed", value_name = "SEED")]
    pub seed: Option<u64>,
}

impl ProviderFlags {
    pub fn apply(&self, s: &mut Settings) {
        let f = self.clone();
        s.provider_kind = f.kind.or(s.provider_kind);
        s.provider_endpoint = f.endpoint.or(s.provider_endpoint.take());
        s.provider_dim = f.dim.or(s.provider_dim);
        s.provider_batch_size = f.batch_size.or(s.provider_batch_size);
        s.provider_lexicon = f.lexicon.or(s.provider_lexicon.take());
        s.provider_seed = f.seed.or(s.provider_seed);
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScorerFlags {
    /// bridge, table or lexical_baseline.
    #[arg(long = "scorer", id = "scorer_kind", value_name = "KIND")]
    pub kind: Option<ScorerKind>,
    #[arg(long = "scorer-endpoint", id = "scorer_endpoint", value_name = "ENDPOINT")]
    pub endpoint: Option<Endpoint>,
    /// Score table TSV for the table scorer.
    #[arg(long = "scorer-table", id = "scorer_table", value_name = "PATH")]
    pub table: Option<PathBuf>,
    /// Lexicon TSV for the lexical baseline scorer.
    #[arg(long = "scorer-lexicon", id = "scorer_lexicon", value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
}

impl ScorerFlags {
    pub fn apply(&self, s: &mut Settings) {
        let f = self.clone();
        s.scorer_kind = f.kind.or(s.scorer_kind);
        s.scorer_endpoint = f.endpoint.or(s.scorer_endpoint.take());
        s.scorer_table = f.table.or(s.scorer_table.take());
        s.scorer_lexicon = f.lexicon.or(s.scorer_lexicon.take());
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct QueryFlags {
    /// Comma-separated subset of tm-fms, tm-neuro, mono-neuro.
    #[arg(long, value_parser = sources)]
    pub sources: Option<BTreeSet<Source>>,
    #[arg(long = "k-fms")]
    pub k_fms: Option<usize>,
    #[arg(long = "k-neuro")]
    pub k_neuro: Option<usize>,
    /// Minimum FMS of fuzzy matches.
    #[arg(long = "fms-min")]
    pub fms_min: Option<f64>,
    /// Minimum estimated FMS of embedding matches.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "neuro-cosine-floor")]
    pub neuro_cosine_floor: Option<f64>,
    /// Probe the IVF index instead of scanning exactly.
    #[arg(long)]
    pub nprobe: Option<usize>,
    /// Fuzzy-match denominator: max-length or query-length.
    #[arg(long = "fms-normalization", value_name = "NORM")]
    pub fms_normalization: Option<Normalization>,
}

impl QueryFlags {
    pub fn apply(&self, s: &mut Settings) {
        let f = self.clone();
        s.sources = f.sources.or(s.sources.take());
        s.k_fms = f.k_fms.or(s.k_fms);
        s.k_neuro = f.k_neuro.or(s.k_neuro);
        s.fms_min = f.fms_min.or(s.fms_min);
        s.neuro_min_estimated = f.threshold.or(s.neuro_min_estimated);
        s.neuro_cosine_floor = f.neuro_cosine_floor.or(s.neuro_cosine_floor);
        s.nprobe = f.nprobe.or(s.nprobe);
        s.fms_normalization = f.fms_normalization.or(s.fms_normalization);
    }
}

/// Index directory from the flag, else from the config.
pub fn index_dir(flag: Option<PathBuf>, config: &Settings) -> tmne_core::Result<PathBuf> {
    flag.or_else(|| config.index_dir.clone()).ok_or_else(|| {
        tmne_core::Error::Config("no index directory (pass --index or set index_dir)".into())
    })
}
