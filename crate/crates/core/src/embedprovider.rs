//! Sentence embeddings from a pluggable provider.
//!
//! The bridge provider talks to an external encoder process over the line
//! protocol in [`crate::protocol`]. The mock providers are pure functions of
//! `(text, dim, seed, lexicon)`: every token gets a pseudo-random vector
//! seeded by `sha256(seed, token)`, and a sentence is the normalized mean of
//! its token vectors. Cosine therefore tracks token overlap. The lexicon mock
//! first maps source tokens to their target-side translation so that a
//! sentence and its word-by-word translation embed identically.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::{Tokenizer, TokenizerMode};
use crate::embedspace::{normalize, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::protocol::{BridgeClient, Endpoint};

pub const DEFAULT_BRIDGE_DIM: usize = 768;
pub const DEFAULT_MOCK_DIM: usize = 256;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const MIN_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProviderKind {
    Bridge,
    Mock,
    LexiconMock,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridge" => Ok(ProviderKind::Bridge),
            "mock" => Ok(ProviderKind::Mock),
            "lexicon_mock" | "lexicon-mock" => Ok(ProviderKind::LexiconMock),
            other => Err(Error::Config(format!(
                "unknown provider kind `{other}` (bridge, mock, lexicon_mock)"
            ))),
        }
    }
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProviderKind::Bridge => "bridge",
            ProviderKind::Mock => "mock",
            ProviderKind::LexiconMock => "lexicon_mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<Endpoint>,
    pub dim: usize,
    pub batch_size: usize,
    pub lexicon_path: Option<PathBuf>,
    /// Seed of the mock token vectors; ignored by the bridge.
    pub seed: u64,
}

impl ProviderConfig {
    pub fn mock(dim: usize, seed: u64) -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            dim,
            batch_size: DEFAULT_BATCH_SIZE,
            lexicon_path: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return Err(Error::Config(format!(
                "embedding dim {} below minimum {MIN_DIM}",
                self.dim
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        match self.kind {
            ProviderKind::Bridge if self.endpoint.is_none() => {
                Err(Error::Config("bridge provider needs an endpoint".into()))
            }
            ProviderKind::LexiconMock if self.lexicon_path.is_none() => {
                Err(Error::Config("lexicon_mock provider needs a lexicon path".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Toy bilingual dictionary, source token to target token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, String>,
}

impl Lexicon {
    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut entries = HashMap::new();
        for (s, t) in pairs {
            let (s, t) = (s.into(), t.into());
            if s.is_empty() || t.is_empty() {
                return Err(Error::invalid("lexicon entries must be non-empty"));
            }
            entries.insert(s, t);
        }
        Ok(Lexicon { entries })
    }

    /// Parse `source<TAB>target` lines; blank lines are ignored.
    pub fn parse(input: impl BufRead) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [s, t] if !s.trim().is_empty() && !t.trim().is_empty() => {
                    pairs.push((s.trim().to_string(), t.trim().to_string()))
                }
                _ => {
                    return Err(Error::format(
                        "lexicon",
                        format!("line {}: expected `source<TAB>target`", n + 1),
                    ))
                }
            }
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::with_path(path, e))?;
        Self::parse(BufReader::new(file))
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.entries.get(token).map(String::as_str)
    }

    /// Unmapped tokens pass through.
    pub fn map_token<'a>(&'a self, token: &'a str) -> &'a str {
        self.get(token).unwrap_or(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Target-to-source dictionary; later duplicates win in key order.
    pub fn inverted(&self) -> Lexicon {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        Lexicon {
            entries: keys
                .into_iter()
                .map(|k| (self.entries[k].clone(), k.clone()))
                .collect(),
        }
    }

    /// Entries sorted by source token.
    pub fn entries(&self) -> Vec<(&str, &str)> {
        let mut v: Vec<(&str, &str)> = self
            .entries
            .iter()
            .map(|(s, t)| (s.as_str(), t.as_str()))
            .collect();
        v.sort();
        v
    }
}

/// Tokenizer shared by the mocks and the lexical baseline.
pub(crate) const MOCK_TOKENIZER: Tokenizer = Tokenizer {
    mode: TokenizerMode::Simple,
    lowercase: true,
};

fn token_vector(token: &str, dim: usize, seed: u64, acc: &mut [f64]) {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    for a in acc.iter_mut().take(dim) {
        *a += f64::from(rng.random::<f32>() * 2.0 - 1.0);
    }
}

/// Deterministic unit vector for `text`.
pub fn mock_embed(text: &str, dim: usize, seed: u64, lexicon: Option<&Lexicon>) -> Result<Vec<f32>> {
    if dim < MIN_DIM {
        return Err(Error::Config(format!("embedding dim {dim} below minimum {MIN_DIM}")));
    }
    let tokens = MOCK_TOKENIZER.tokenize(text);
    if tokens.is_empty() {
        return Err(Error::invalid(format!("cannot embed `{text}`: no tokens")));
    }
    let mut acc = vec![0f64; dim];
    for t in tokens.iter() {
        let t = lexicon.map_or(t.as_str(), |l| l.map_token(t));
        token_vector(t, dim, seed, &mut acc);
    }
    let mean: Vec<f32> = acc.iter().map(|&x| (x / tokens.len() as f64) as f32).collect();
    normalize(&mean)
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// One unit vector per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    dim: usize,
    seed: u64,
    lexicon: Option<Arc<Lexicon>>,
}

impl MockProvider {
    pub fn new(dim: usize, seed: u64, lexicon: Option<Arc<Lexicon>>) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::Config(format!("embedding dim {dim} below minimum {MIN_DIM}")));
        }
        Ok(MockProvider { dim, seed, lexicon })
    }
}

impl EmbeddingProvider for MockProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        texts
            .par_iter()
            .map(|t| mock_embed(t, self.dim, self.seed, self.lexicon.as_deref()))
            .collect()
    }
}

#[derive(Debug)]
pub struct BridgeProvider {
    client: Arc<BridgeClient>,
    dim: usize,
    batch_size: usize,
}

impl BridgeProvider {
    pub fn new(client: Arc<BridgeClient>, dim: usize, batch_size: usize) -> Self {
        BridgeProvider {
            client,
            dim,
            batch_size: batch_size.max(1),
        }
    }
}

impl EmbeddingProvider for BridgeProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let (dim, vectors) = self.client.embed(chunk)?;
            if dim != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: dim,
                });
            }
            for v in vectors {
                out.push(normalize(&v).map_err(|_| {
                    Error::Protocol("bridge returned a zero or non-finite vector".into())
                })?);
            }
        }
        Ok(out)
    }
}

pub fn open_provider(config: &ProviderConfig) -> Result<Arc<dyn EmbeddingProvider>> {
    config.validate()?;
    Ok(match config.kind {
        ProviderKind::Mock => Arc::new(MockProvider::new(config.dim, config.seed, None)?),
        ProviderKind::LexiconMock => {
            let path = config.lexicon_path.as_deref().expect("validated");
            let lexicon = Arc::new(Lexicon::load(path)?);
            Arc::new(MockProvider::new(config.dim, config.seed, Some(lexicon))?)
        }
        ProviderKind::Bridge => {
            let client = BridgeClient::connect(config.endpoint.as_ref().expect("validated"))?;
            Arc::new(BridgeProvider::new(client, config.dim, config.batch_size))
        }
    })
}

/// Embed `texts` into a matrix whose row ids are `ids`.
pub fn embed_matrix(
    provider: &dyn EmbeddingProvider,
    ids: Vec<u64>,
    texts: &[String],
) -> Result<EmbeddingMatrix> {
    if texts.is_empty() {
        return Err(Error::invalid("nothing to embed"));
    }
    let rows = provider.embed(texts)?;
    EmbeddingMatrix::from_rows(provider.dim(), ids, &rows)
}

/// Embed `texts` with a freshly opened provider; row ids are input positions.
pub fn embed_batch(config: &ProviderConfig, texts: &[String]) -> Result<EmbeddingMatrix> {
    let provider = open_provider(config)?;
    embed_matrix(provider.as_ref(), (0..texts.len() as u64).collect(), texts)
}
