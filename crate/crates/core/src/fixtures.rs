//! Deterministic synthetic bilingual data.
//!
//! Source and target words are built from disjoint consonant sets, so no
//! word exists in both languages. Every sentence is a uniform draw of 6 to
//! 16 source words, and its translation maps each word through the
//! dictionary in place. Two kinds of answer are planted for a seeded subset
//! of test sentences:
//!
//! * a TM unit whose source is the test source with one or two words
//!   substituted (FMS at least 1 - 2/6), and whose target is that
//!   sentence's translation;
//! * a monolingual sentence equal to the reference, or the reference with
//!   one word substituted (alternating).

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{MonoSentence, TestPair, TranslationUnit};
use crate::embedprovider::Lexicon;
use crate::error::{Error, Result};

const MIN_LEN: usize = 6;
const MAX_LEN: usize = 16;
const VOWELS: &[u8] = b"aeiou";
const SOURCE_CONSONANTS: &[u8] = b"bdfgklmnprst";
const TARGET_CONSONANTS: &[u8] = b"chjqvwxyz";

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub vocab_size: usize,
    /// Dictionary entries exposed to the mock embedder and the lexical
    /// scorer; the rest of the vocabulary stays untranslatable for them.
    pub lexicon_size: usize,
    pub tm_size: usize,
    pub mono_size: usize,
    pub test_size: usize,
    pub mono_reference_rate: f64,
    pub tm_near_match_rate: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 13,
            vocab_size: 400,
            lexicon_size: 400,
            tm_size: 1000,
            mono_size: 2000,
            test_size: 200,
            mono_reference_rate: 0.3,
            tm_near_match_rate: 0.2,
        }
    }
}

impl FixtureSpec {
    fn plants(rate: f64, n: usize) -> usize {
        (rate * n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("lexicon_size", self.lexicon_size),
            ("tm_size", self.tm_size),
            ("mono_size", self.mono_size),
            ("test_size", self.test_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.lexicon_size > self.vocab_size {
            return Err(Error::Config("lexicon_size exceeds vocab_size".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".into()));
        }
        for (name, v) in [
            ("mono_reference_rate", self.mono_reference_rate),
            ("tm_near_match_rate", self.tm_near_match_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if Self::plants(self.tm_near_match_rate, self.test_size) > self.tm_size {
            return Err(Error::Config("more TM plants than TM units".into()));
        }
        if Self::plants(self.mono_reference_rate, self.test_size) > self.mono_size {
            return Err(Error::Config("more monolingual plants than sentences".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonoPlant {
    Exact,
    OneEdit,
}

/// What was planted for one test pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub test_id: u64,
    /// TM unit whose source is a near match of the test source.
    pub tm_match: Option<u64>,
    pub tm_substitutions: usize,
    pub mono_match: Option<(u64, MonoPlant)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub tm: Vec<TranslationUnit>,
    pub mono: Vec<MonoSentence>,
    pub test: Vec<TestPair>,
    /// The truncated dictionary handed to models.
    pub lexicon: Lexicon,
    /// Translation of every vocabulary word.
    pub dictionary: Lexicon,
    pub truth: Vec<GroundTruth>,
}

fn make_words(rng: &mut ChaCha8Rng, consonants: &[u8], n: usize) -> Vec<String> {
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::with_capacity(syllables * 2);
        for _ in 0..syllables {
            w.push(consonants[rng.random_range(0..consonants.len())] as char);
            w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Gen {
    rng: ChaCha8Rng,
    source: Vec<String>,
    target: Vec<String>,
}

impl Gen {
    fn sentence(&mut self) -> Vec<usize> {
        let len = self.rng.random_range(MIN_LEN..=MAX_LEN);
        (0..len).map(|_| self.rng.random_range(0..self.source.len())).collect()
    }

    /// Replace `count` distinct positions with different words.
    fn substitute(&mut self, words: &[usize], count: usize) -> Vec<usize> {
        let mut out = words.to_vec();
        let mut positions: Vec<usize> = (0..out.len()).collect();
        positions.shuffle(&mut self.rng);
        for &p in positions.iter().take(count) {
            let old = out[p];
            while out[p] == old {
                out[p] = self.rng.random_range(0..self.source.len());
            }
        }
        out
    }

    fn src(&self, w: &[usize]) -> String {
        w.iter().map(|&i| self.source[i].as_str()).collect::<Vec<_>>().join(" ")
    }

    fn tgt(&self, w: &[usize]) -> String {
        w.iter().map(|&i| self.target[i].as_str()).collect::<Vec<_>>().join(" ")
    }
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let source = make_words(&mut rng, SOURCE_CONSONANTS, spec.vocab_size);
    let target = make_words(&mut rng, TARGET_CONSONANTS, spec.vocab_size);
    let mut g = Gen { rng, source, target };

    let mut tm_words: Vec<Vec<usize>> = (0..spec.tm_size).map(|_| g.sentence()).collect();
    let mut mono_words: Vec<Vec<usize>> = (0..spec.mono_size).map(|_| g.sentence()).collect();
    let test_words: Vec<Vec<usize>> = (0..spec.test_size).map(|_| g.sentence()).collect();

    let mut order: Vec<usize> = (0..spec.test_size).collect();
    order.shuffle(&mut g.rng);
    let mut tm_slots: Vec<usize> = (0..spec.tm_size).collect();
    tm_slots.shuffle(&mut g.rng);
    let mut mono_slots: Vec<usize> = (0..spec.mono_size).collect();
    mono_slots.shuffle(&mut g.rng);

    let mut truth: Vec<GroundTruth> = (0..spec.test_size)
        .map(|i| GroundTruth {
            test_id: i as u64,
            tm_match: None,
            tm_substitutions: 0,
            mono_match: None,
        })
        .collect();

    let n_tm = FixtureSpec::plants(spec.tm_near_match_rate, spec.test_size);
    for (k, &t) in order.iter().take(n_tm).enumerate() {
        let subs = g.rng.random_range(1..=2);
        let slot = tm_slots[k];
        tm_words[slot] = g.substitute(&test_words[t], subs);
        truth[t].tm_match = Some(slot as u64);
        truth[t].tm_substitutions = subs;
    }
    let n_mono = FixtureSpec::plants(spec.mono_reference_rate, spec.test_size);
    for k in 0..n_mono {
        let t = order[(n_tm + k) % spec.test_size];
        let slot = mono_slots[k];
        let kind = if k % 2 == 0 { MonoPlant::Exact } else { MonoPlant::OneEdit };
        mono_words[slot] = match kind {
            MonoPlant::Exact => test_words[t].clone(),
            MonoPlant::OneEdit => g.substitute(&test_words[t], 1),
        };
        truth[t].mono_match = Some((slot as u64, kind));
    }

    let dictionary = Lexicon::from_pairs(g.source.iter().cloned().zip(g.target.iter().cloned()))?;
    let lexicon = Lexicon::from_pairs(
        g.source
            .iter()
            .cloned()
            .zip(g.target.iter().cloned())
            .take(spec.lexicon_size),
    )?;
    Ok(Fixture {
        tm: tm_words
            .iter()
            .enumerate()
            .map(|(i, w)| TranslationUnit {
                id: i as u64,
                source: g.src(w),
                target: g.tgt(w),
                doc_id: None,
            })
            .collect(),
        mono: mono_words
            .iter()
            .enumerate()
            .map(|(i, w)| MonoSentence {
                id: i as u64,
                text: g.tgt(w),
                doc_id: None,
            })
            .collect(),
        test: test_words
            .iter()
            .enumerate()
            .map(|(i, w)| TestPair {
                id: i as u64,
                source: g.src(w),
                reference: g.tgt(w),
                doc_id: None,
            })
            .collect(),
        lexicon,
        dictionary,
        truth,
    })
}

pub const FIXTURE_FILES: [&str; 5] = ["tm.tsv", "mono.txt", "test.tsv", "lexicon.tsv", "truth.tsv"];

impl Fixture {
    /// Write `tm.tsv`, `mono.txt`, `test.tsv`, `lexicon.tsv` and
    /// `truth.tsv` into `dir`, creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::with_path(dir, e))?;
        let write = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .and_then(|mut f| f.write_all(body.as_bytes()))
                .map_err(|e| Error::with_path(&path, e))
        };
        write(
            "tm.tsv",
            self.tm.iter().map(|t| format!("{}\t{}\n", t.source, t.target)).collect(),
        )?;
        write("mono.txt", self.mono.iter().map(|m| format!("{}\n", m.text)).collect())?;
        write(
            "test.tsv",
            self.test.iter().map(|t| format!("{}\t{}\n", t.source, t.reference)).collect(),
        )?;
        write(
            "lexicon.tsv",
            self.lexicon.entries().iter().map(|(s, t)| format!("{s}\t{t}\n")).collect(),
        )?;
        let mut truth = String::from("test_id\ttm_match\ttm_substitutions\tmono_match\tmono_kind\n");
        for g in &self.truth {
            let (mono, kind) = match g.mono_match {
                Some((id, MonoPlant::Exact)) => (id.to_string(), "exact"),
                Some((id, MonoPlant::OneEdit)) => (id.to_string(), "one_edit"),
                None => (String::new(), ""),
            };
            truth.push_str(&format!(
                "{}\t{}\t{}\t{mono}\t{kind}\n",
                g.test_id,
                g.tm_match.map(|i| i.to_string()).unwrap_or_default(),
                g.tm_substitutions,
            ));
        }
        write("truth.tsv", truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::fms::fms;

    fn small() -> FixtureSpec {
        FixtureSpec {
            tm_size: 200,
            mono_size: 200,
            test_size: 100,
            ..FixtureSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_fixture(&small()).unwrap(), generate_fixture(&small()).unwrap());
        let other = FixtureSpec { seed: 14, ..small() };
        assert_ne!(generate_fixture(&small()).unwrap(), generate_fixture(&other).unwrap());
    }

    #[test]
    fn plant_counts() {
        let f = generate_fixture(&small()).unwrap();
        assert_eq!(f.truth.iter().filter(|t| t.mono_match.is_some()).count(), 30);
        assert_eq!(f.truth.iter().filter(|t| t.tm_match.is_some()).count(), 20);
        // disjoint when the rates sum to at most one
        assert!(f.truth.iter().all(|t| t.tm_match.is_none() || t.mono_match.is_none()));
        let none = generate_fixture(&FixtureSpec { tm_near_match_rate: 0.0, ..small() }).unwrap();
        assert!(none.truth.iter().all(|t| t.tm_match.is_none()));
    }

    #[test]
    fn plants_have_the_promised_shape() {
        let f = generate_fixture(&small()).unwrap();
        for g in &f.truth {
            let test = &f.test[g.test_id as usize];
            if let Some(tm) = g.tm_match {
                let tu = &f.tm[tm as usize];
                let score = fms(&tokenize(&test.source), &tokenize(&tu.source)).unwrap();
                assert!(score >= 0.6, "{score}");
            }
            if let Some((id, kind)) = g.mono_match {
                let m = &f.mono[id as usize].text;
                match kind {
                    MonoPlant::Exact => assert_eq!(m, &test.reference),
                    MonoPlant::OneEdit => {
                        let (a, b) = (tokenize(m), tokenize(&test.reference));
                        assert_eq!(crate::fms::word_edit_distance(&a, &b), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn vocabularies_are_disjoint_and_translations_align() {
        let f = generate_fixture(&small()).unwrap();
        let targets: HashSet<&str> = f.dictionary.entries().iter().map(|e| e.1).collect();
        for (s, _) in f.dictionary.entries() {
            assert!(!targets.contains(s));
        }
        let tu = &f.tm[0];
        let mapped: Vec<&str> = tu
            .source
            .split(' ')
            .map(|w| f.dictionary.get(w).unwrap())
            .collect();
        assert_eq!(mapped.join(" "), tu.target);
        let len = tokenize(&tu.source).len();
        assert!((MIN_LEN..=MAX_LEN).contains(&len));
    }

    #[test]
    fn lexicon_is_a_prefix_of_the_dictionary() {
        let f = generate_fixture(&FixtureSpec { lexicon_size: 50, ..small() }).unwrap();
        assert_eq!(f.lexicon.len(), 50);
        assert_eq!(f.dictionary.len(), 400);
        assert!(f.lexicon.entries().iter().all(|(s, t)| f.dictionary.get(s) == Some(t)));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_fixture(&FixtureSpec { test_size: 0, ..small() }).is_err());
        assert!(generate_fixture(&FixtureSpec { mono_reference_rate: 1.5, ..small() }).is_err());
        assert!(generate_fixture(&FixtureSpec { lexicon_size: 500, ..small() }).is_err());
        assert!(generate_fixture(&FixtureSpec { tm_size: 5, ..small() }).is_err());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = generate_fixture(&small()).unwrap();
        f.write_to_dir(dir.path()).unwrap();
        for name in FIXTURE_FILES {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let tm = std::fs::read_to_string(dir.path().join("tm.tsv")).unwrap();
        assert_eq!(tm.lines().count(), 200);
    }
}
