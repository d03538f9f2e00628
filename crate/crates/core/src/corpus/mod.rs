//! Translation memories, monolingual corpora and test sets.

mod filter;
mod parse;
mod store;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use filter::{exclude_overlap, filter_test_set, FilterReport, OverlapReport};
pub use parse::{
    parse_mono, parse_test_set, parse_tm, Parsed, SkipReport, Skipped, TmFormat, TmxLanguages,
};
pub use store::{read_corpus, write_corpus, CorpusKind, CorpusRecord};
pub use tokenize::{tokenize, TokenizedSentence, Tokenizer, TokenizerMode};

/// A source/target sentence pair from a translation memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub id: u64,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
}

/// A target-language sentence with no source counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonoSentence {
    pub id: u64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
}

/// A sentence to translate together with its reference translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPair {
    pub id: u64,
    pub source: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
}

impl From<TranslationUnit> for TestPair {
    fn from(tu: TranslationUnit) -> Self {
        TestPair {
            id: tu.id,
            source: tu.source,
            reference: tu.target,
            doc_id: tu.doc_id,
        }
    }
}
