//! On-disk index directory: corpora, FMS index, embedding matrices, IVF
//! indices and a manifest with per-file checksums.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tmne_core::corpus::{read_corpus, write_corpus, CorpusRecord, MonoSentence, Tokenizer, TranslationUnit};
use tmne_core::embedprovider::{embed_matrix, open_provider, Lexicon, ProviderConfig, ProviderKind};
use tmne_core::embedspace::{default_nlist, train_ivf, EmbeddingMatrix, IvfIndex};
use tmne_core::fms::{build_fms_index, FmsIndex};
use tmne_core::ranker::{Engine, NeuroIndex, Source};
use tmne_core::scorer::open_scorer;
use tmne_core::{Error, Result};

use crate::config::Settings;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT: &str = "tmne-index v1";
pub const LEXICON_FILE: &str = "lexicon.tsv";

const TM_CORPUS: &str = "tm.corpus";
const MONO_CORPUS: &str = "mono.corpus";
const FMS_INDEX: &str = "fms.idx";
const TM_EMB: &str = "tm.emb";
const TM_IVF: &str = "tm.ivf";
const MONO_EMB: &str = "mono.emb";
const MONO_IVF: &str = "mono.ivf";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tm: usize,
    pub mono: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRecord {
    pub kind: String,
    pub dim: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub endpoint: Option<String>,
    /// Relative to the index directory.
    pub lexicon: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvfRecord {
    pub tm_nlist: Option<usize>,
    pub mono_nlist: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub tokenizer: Tokenizer,
    pub counts: Counts,
    pub provider: Option<ProviderRecord>,
    pub ivf: IvfRecord,
    pub files: BTreeMap<String, FileRecord>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::with_path(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "index manifest",
            detail: e.to_string(),
        })?;
        if m.format != FORMAT {
            return Err(Error::Format {
                what: "index manifest",
                detail: format!("unsupported format `{}`", m.format),
            });
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// The settings layer an index contributes: tokenizer, seed and the
    /// provider it was embedded with.
    pub fn settings(&self, dir: &Path) -> Result<Settings> {
        let mut s = Settings {
            seed: Some(self.seed),
            tokenizer_mode: Some(self.tokenizer.mode),
            tokenizer_lowercase: Some(self.tokenizer.lowercase),
            ..Settings::default()
        };
        if let Some(p) = &self.provider {
            s.provider_kind = Some(p.kind.parse()?);
            s.provider_dim = Some(p.dim);
            s.provider_seed = Some(p.seed);
            s.provider_batch_size = Some(p.batch_size);
            s.provider_endpoint = p.endpoint.as_deref().map(str::parse).transpose()?;
            s.provider_lexicon = p.lexicon.as_ref().map(|l| dir.join(l));
        }
        Ok(s)
    }

    pub fn has(&self, file: &str) -> bool {
        self.files.contains_key(file)
    }

    /// Sources backed by files in this index.
    pub fn sources(&self) -> BTreeSet<Source> {
        let mut out = BTreeSet::new();
        if self.has(FMS_INDEX) {
            out.insert(Source::TmFms);
        }
        if self.has(TM_EMB) {
            out.insert(Source::TmNeuro);
        }
        if self.has(MONO_EMB) {
            out.insert(Source::MonoNeuro);
        }
        out
    }
}

/// Removes everything it wrote unless disarmed.
struct Cleanup {
    files: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
    armed: bool,
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(d) = &self.created_dir {
            let _ = fs::remove_dir(d);
        }
    }
}

struct Writer<'a> {
    dir: &'a Path,
    cleanup: Cleanup,
    files: BTreeMap<String, FileRecord>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        self.cleanup.files.push(path.clone());
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(data))
            .map_err(|e| Error::with_path(&path, e))?;
        self.files.insert(
            name.to_string(),
            FileRecord {
                bytes: data.len() as u64,
                sha256: sha256_hex(data),
            },
        );
        Ok(())
    }
}

pub fn read_corpus_file<T: CorpusRecord>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::with_path(path, e))?;
    read_corpus(BufReader::new(f))
}

fn corpus_bytes<T: CorpusRecord>(records: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, records)?;
    Ok(buf)
}

#[derive(Debug, Clone)]
pub struct BuildRequest {
    pub tm: PathBuf,
    pub mono: Option<PathBuf>,
    pub out: PathBuf,
    pub settings: Settings,
}

fn check_nlist(nlist: Option<usize>, what: &str, count: usize) -> Result<usize> {
    let n = nlist.unwrap_or_else(|| default_nlist(count));
    if n == 0 || n > count {
        return Err(Error::Config(format!(
            "nlist {n} must be between 1 and the {what} count {count}"
        )));
    }
    Ok(n)
}

fn embed_side(
    w: &mut Writer<'_>,
    provider: &dyn tmne_core::embedprovider::EmbeddingProvider,
    ids: Vec<u64>,
    texts: &[String],
    nlist: usize,
    seed: u64,
    names: (&str, &str),
) -> Result<()> {
    let matrix = embed_matrix(provider, ids, texts)?;
    w.put(names.0, &matrix.to_bytes())?;
    let ivf = train_ivf(&matrix, nlist, seed)?;
    w.put(names.1, &ivf.to_bytes())
}

/// Build an index directory. On failure every file written so far is
/// removed again.
pub fn build_index(req: &BuildRequest) -> Result<Manifest> {
    let s = &req.settings;
    let tokenizer = s.tokenizer();
    let seed = s.seed();
    let provider_config = s.provider()?;

    let tm: Vec<TranslationUnit> = read_corpus_file(&req.tm)?;
    let mono: Vec<MonoSentence> = match &req.mono {
        Some(p) => read_corpus_file(p)?,
        None => Vec::new(),
    };
    let mut ivf = IvfRecord {
        tm_nlist: None,
        mono_nlist: None,
    };
    if provider_config.is_some() {
        ivf.tm_nlist = Some(check_nlist(s.nlist, "TM", tm.len())?);
        if !mono.is_empty() {
            ivf.mono_nlist = Some(check_nlist(s.nlist, "monolingual", mono.len())?);
        }
    }

    let created_dir = (!req.out.exists()).then(|| req.out.clone());
    fs::create_dir_all(&req.out).map_err(|e| Error::with_path(&req.out, e))?;
    let mut w = Writer {
        dir: &req.out,
        cleanup: Cleanup {
            files: Vec::new(),
            created_dir,
            armed: true,
        },
        files: BTreeMap::new(),
    };
    // a stale manifest must not describe a half-written directory
    let stale = req.out.join(MANIFEST);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::with_path(&stale, e))?;
    }

    let fms_index = build_fms_index(&tm, tokenizer)?;
    w.put(TM_CORPUS, &corpus_bytes(&tm)?)?;
    w.put(FMS_INDEX, &fms_index.to_bytes())?;
    if !mono.is_empty() {
        w.put(MONO_CORPUS, &corpus_bytes(&mono)?)?;
    }

    let provider_record = match &provider_config {
        None => None,
        Some(pc) => {
            let provider = open_provider(pc)?;
            let mut lexicon = None;
            if pc.kind == ProviderKind::LexiconMock {
                let path = pc.lexicon_path.as_deref().expect("validated");
                let lex = Lexicon::load(path)?;
                let body: String =
                    lex.entries().iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
                w.put(LEXICON_FILE, body.as_bytes())?;
                lexicon = Some(LEXICON_FILE.to_string());
            }
            let targets: Vec<String> = tm.iter().map(|t| t.target.clone()).collect();
            let ids = tm.iter().map(|t| t.id).collect();
            let nlist = ivf.tm_nlist.expect("set with provider");
            embed_side(&mut w, provider.as_ref(), ids, &targets, nlist, seed, (TM_EMB, TM_IVF))?;
            if let Some(nlist) = ivf.mono_nlist {
                let texts: Vec<String> = mono.iter().map(|m| m.text.clone()).collect();
                let ids = mono.iter().map(|m| m.id).collect();
                embed_side(&mut w, provider.as_ref(), ids, &texts, nlist, seed, (MONO_EMB, MONO_IVF))?;
            }
            Some(provider_record(pc, lexicon))
        }
    };

    let manifest = Manifest {
        format: FORMAT.to_string(),
        seed,
        tokenizer,
        counts: Counts {
            tm: tm.len(),
            mono: mono.len(),
        },
        provider: provider_record,
        ivf,
        files: w.files.clone(),
    };
    let path = req.out.join(MANIFEST);
    w.cleanup.files.push(path.clone());
    fs::write(&path, manifest.to_json()).map_err(|e| Error::with_path(&path, e))?;
    w.cleanup.armed = false;
    Ok(manifest)
}

fn provider_record(pc: &ProviderConfig, lexicon: Option<String>) -> ProviderRecord {
    ProviderRecord {
        kind: pc.kind.to_string(),
        dim: pc.dim,
        seed: pc.seed,
        batch_size: pc.batch_size,
        endpoint: pc.endpoint.as_ref().map(|e| e.to_string()),
        lexicon,
    }
}

/// Read a listed file and check it against the manifest.
fn read_checked(dir: &Path, manifest: &Manifest, name: &str) -> Result<Option<Vec<u8>>> {
    let Some(rec) = manifest.files.get(name) else {
        return Ok(None);
    };
    let path = dir.join(name);
    let data = fs::read(&path).map_err(|e| Error::with_path(&path, e))?;
    if data.len() as u64 != rec.bytes || sha256_hex(&data) != rec.sha256 {
        return Err(Error::Checksum(format!("{} does not match the manifest", path.display())));
    }
    Ok(Some(data))
}

fn neuro(dir: &Path, m: &Manifest, emb: &str, ivf: &str) -> Result<Option<NeuroIndex>> {
    let Some(bytes) = read_checked(dir, m, emb)? else {
        return Ok(None);
    };
    let matrix = EmbeddingMatrix::from_bytes(&bytes)?;
    let ivf = read_checked(dir, m, ivf)?
        .map(|b| IvfIndex::from_bytes(&b))
        .transpose()?;
    NeuroIndex::new(matrix, ivf).map(Some)
}

/// Load an index directory into an engine. `settings` must already
/// include the manifest layer.
pub fn load_engine(dir: &Path, manifest: &Manifest, settings: &Settings) -> Result<Engine> {
    let tm: Vec<TranslationUnit> = match read_checked(dir, manifest, TM_CORPUS)? {
        Some(b) => read_corpus(b.as_slice())?,
        None => Vec::new(),
    };
    let mono: Vec<MonoSentence> = match read_checked(dir, manifest, MONO_CORPUS)? {
        Some(b) => read_corpus(b.as_slice())?,
        None => Vec::new(),
    };
    let fms_index = read_checked(dir, manifest, FMS_INDEX)?
        .map(|b| FmsIndex::from_bytes(&b))
        .transpose()?;
    let tm_neuro = neuro(dir, manifest, TM_EMB, TM_IVF)?;
    let mono_neuro = neuro(dir, manifest, MONO_EMB, MONO_IVF)?;

    let mut provider = None;
    if tm_neuro.is_some() || mono_neuro.is_some() {
        if let Some(pc) = settings.provider()? {
            let p = open_provider(&pc)?;
            let dim = tm_neuro.iter().chain(&mono_neuro).next().expect("checked").matrix.dim();
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.dim(),
                });
            }
            provider = Some(p);
        }
    }
    let scorer = settings.scorer()?.map(|c| open_scorer(&c)).transpose()?;

    Ok(Engine {
        fms_index,
        tm: tm.into_iter().map(|t| (t.id, t)).collect::<HashMap<_, _>>(),
        tm_neuro,
        mono: mono.into_iter().map(|m| (m.id, m)).collect(),
        mono_neuro,
        provider,
        scorer,
    })
}

/// Loaded index plus the fully layered settings.
pub struct Loaded {
    pub manifest: Manifest,
    pub settings: Settings,
    pub engine: Arc<Engine>,
}

/// Read the manifest, layer `config` then `flags` over it and load.
/// Sources default to the ones the index can serve.
pub fn open_index(dir: &Path, config: Settings, flags: Settings) -> Result<Loaded> {
    let manifest = Manifest::read(dir)?;
    let mut settings = manifest.settings(dir)?.overlay(config).overlay(flags);
    if settings.sources.is_none() {
        settings.sources = Some(manifest.sources());
    }
    let engine = load_engine(dir, &manifest, &settings)?;
    Ok(Loaded {
        manifest,
        settings,
        engine: Arc::new(engine),
    })
}
