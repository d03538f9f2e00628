//! Layered settings: built-in defaults, then the index manifest, then a
//! `key = value` config file, then command-line flags.
//!
//! Config file syntax: one `key = value` per line, `#` starts a comment.
//! Relative paths are resolved against the directory holding the file.
//!
//! ```text
//! index_dir = idx
//! provider.kind = lexicon_mock
//! provider.lexicon = data/lexicon.tsv
//! scorer.kind = lexical_baseline
//! scorer.lexicon = data/lexicon.tsv
//! query.sources = tm-fms,mono-neuro
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tmne_core::corpus::{Tokenizer, TokenizerMode};
use tmne_core::embedprovider::{
    ProviderConfig, ProviderKind, DEFAULT_BATCH_SIZE, DEFAULT_BRIDGE_DIM, DEFAULT_MOCK_DIM,
};
use tmne_core::fms::Normalization;
use tmne_core::protocol::Endpoint;
use tmne_core::ranker::{parse_sources, QueryConfig, Source};
use tmne_core::scorer::{ScorerConfig, ScorerKind};
use tmne_core::{Error, Result};

pub const CONFIG_ENV: &str = "TMNE_CONFIG";
pub const DEFAULT_SEED: u64 = 13;

pub const KEYS: [&str; 23] = [
    "index_dir",
    "seed",
    "tokenizer.mode",
    "tokenizer.lowercase",
    "provider.kind",
    "provider.endpoint",
    "provider.dim",
    "provider.batch_size",
    "provider.lexicon",
    "provider.seed",
    "scorer.kind",
    "scorer.endpoint",
    "scorer.table",
    "scorer.lexicon",
    "query.k_fms",
    "query.k_neuro",
    "query.fms_min",
    "query.neuro_min_estimated",
    "query.sources",
    "query.neuro_cosine_floor",
    "query.nprobe",
    "query.fms_normalization",
    "build.nlist",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub index_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tokenizer_mode: Option<TokenizerMode>,
    pub tokenizer_lowercase: Option<bool>,
    pub provider_kind: Option<ProviderKind>,
    pub provider_endpoint: Option<Endpoint>,
    pub provider_dim: Option<usize>,
    pub provider_batch_size: Option<usize>,
    pub provider_lexicon: Option<PathBuf>,
    pub provider_seed: Option<u64>,
    pub scorer_kind: Option<ScorerKind>,
    pub scorer_endpoint: Option<Endpoint>,
    pub scorer_table: Option<PathBuf>,
    pub scorer_lexicon: Option<PathBuf>,
    pub k_fms: Option<usize>,
    pub k_neuro: Option<usize>,
    pub fms_min: Option<f64>,
    pub neuro_min_estimated: Option<f64>,
    pub sources: Option<BTreeSet<Source>>,
    pub neuro_cosine_floor: Option<f64>,
    pub nprobe: Option<usize>,
    pub fms_normalization: Option<Normalization>,
    pub nlist: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for {key}: {e}")))
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl Settings {
    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: Settings) -> Settings {
        let s = &mut self;
        overlay_fields!(
            s, over, index_dir, seed, tokenizer_mode, tokenizer_lowercase, provider_kind,
            provider_endpoint, provider_dim, provider_batch_size, provider_lexicon,
            provider_seed, scorer_kind, scorer_endpoint, scorer_table, scorer_lexicon, k_fms,
            k_neuro, fms_min, neuro_min_estimated, sources, neuro_cosine_floor, nprobe,
            fms_normalization, nlist
        );
        self
    }

    /// Set one key. `base` resolves relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        match key {
            "index_dir" => self.index_dir = Some(path()),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "tokenizer.mode" => self.tokenizer_mode = Some(value.parse()?),
            "tokenizer.lowercase" => self.tokenizer_lowercase = Some(parse_value(key, value)?),
            "provider.kind" => self.provider_kind = Some(value.parse()?),
            "provider.endpoint" => self.provider_endpoint = Some(value.parse()?),
            "provider.dim" => self.provider_dim = Some(parse_value(key, value)?),
            "provider.batch_size" => self.provider_batch_size = Some(parse_value(key, value)?),
            "provider.lexicon" => self.provider_lexicon = Some(path()),
            "provider.seed" => self.provider_seed = Some(parse_value(key, value)?),
            "scorer.kind" => self.scorer_kind = Some(value.parse()?),
            "scorer.endpoint" => self.scorer_endpoint = Some(value.parse()?),
            "scorer.table" => self.scorer_table = Some(path()),
            "scorer.lexicon" => self.scorer_lexicon = Some(path()),
            "query.k_fms" => self.k_fms = Some(parse_value(key, value)?),
            "query.k_neuro" => self.k_neuro = Some(parse_value(key, value)?),
            "query.fms_min" => self.fms_min = Some(parse_value(key, value)?),
            "query.neuro_min_estimated" => self.neuro_min_estimated = Some(parse_value(key, value)?),
            "query.sources" => self.sources = Some(parse_sources(value)?),
            "query.neuro_cosine_floor" => self.neuro_cosine_floor = Some(parse_value(key, value)?),
            "query.nprobe" => self.nprobe = Some(parse_value(key, value)?),
            "query.fms_normalization" => self.fms_normalization = Some(parse_value(key, value)?),
            "build.nlist" => self.nlist = Some(parse_value(key, value)?),
            other => {
                return Err(Error::Config(format!(
                    "unknown config key `{other}` (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, base: &Path) -> Result<Settings> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            s.set(key.trim(), value.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::with_path(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Settings::parse(&text, base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The file named by `--config`, else by `TMNE_CONFIG`, else nothing.
    pub fn from_env_or(path: Option<&Path>) -> Result<Settings> {
        match path {
            Some(p) => Settings::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Settings::load(Path::new(&p)),
                _ => Ok(Settings::default()),
            },
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::new(
            self.tokenizer_mode.unwrap_or_default(),
            self.tokenizer_lowercase.unwrap_or(false),
        )
    }

    /// `None` when no provider kind is configured.
    pub fn provider(&self) -> Result<Option<ProviderConfig>> {
        let Some(kind) = self.provider_kind else {
            return Ok(None);
        };
        let default_dim = match kind {
            ProviderKind::Bridge => DEFAULT_BRIDGE_DIM,
            _ => DEFAULT_MOCK_DIM,
        };
        let config = ProviderConfig {
            kind,
            endpoint: self.provider_endpoint.clone(),
            dim: self.provider_dim.unwrap_or(default_dim),
            batch_size: self.provider_batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            lexicon_path: self.provider_lexicon.clone(),
            seed: self.provider_seed.unwrap_or_else(|| self.seed()),
        };
        config.validate()?;
        Ok(Some(config))
    }

    pub fn scorer(&self) -> Result<Option<ScorerConfig>> {
        let Some(kind) = self.scorer_kind else {
            return Ok(None);
        };
        let config = ScorerConfig {
            kind,
            endpoint: self.scorer_endpoint.clone().filter(|_| kind == ScorerKind::Bridge),
            table_path: self.scorer_table.clone().filter(|_| kind == ScorerKind::Table),
            lexicon_path: self
                .scorer_lexicon
                .clone()
                .filter(|_| kind == ScorerKind::LexicalBaseline),
        };
        config.validate()?;
        Ok(Some(config))
    }

    pub fn query(&self) -> Result<QueryConfig> {
        let d = QueryConfig::default();
        let config = QueryConfig {
            k_fms: self.k_fms.unwrap_or(d.k_fms),
            k_neuro: self.k_neuro.unwrap_or(d.k_neuro),
            fms_min: self.fms_min.unwrap_or(d.fms_min),
            neuro_min_estimated: self.neuro_min_estimated.unwrap_or(d.neuro_min_estimated),
            sources: self.sources.clone().unwrap_or(d.sources),
            neuro_cosine_floor: self.neuro_cosine_floor.or(d.neuro_cosine_floor),
            nprobe: self.nprobe.or(d.nprobe),
            fms_normalization: self.fms_normalization.unwrap_or(d.fms_normalization),
        };
        config.validate()?;
        Ok(config)
    }
}
