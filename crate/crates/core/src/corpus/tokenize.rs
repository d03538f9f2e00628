//! Word tokenization used by every edit-distance computation.
//!
//! The simple tokenizer applies NFC normalization, splits on whitespace and
//! detaches leading/trailing punctuation characters as one token each.
//! Interior punctuation (`don't`, `3.5`, `e-mail`) stays attached.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::Error;

/// An ordered list of non-empty, whitespace-free tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedSentence(Vec<String>);

impl TokenizedSentence {
    /// Build from pre-split tokens. Empty tokens are dropped and tokens
    /// containing whitespace are split further.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        TokenizedSentence(
            tokens
                .into_iter()
                .flat_map(|t| {
                    t.as_ref()
                        .split_whitespace()
                        .map(str::to_string)
                        .collect::<Vec<_>>()
                })
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenizedSentence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    /// NFC, whitespace split, punctuation detachment.
    #[default]
    Simple,
    /// NFC and whitespace split only.
    Whitespace,
}

impl TokenizerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenizerMode::Simple => "simple",
            TokenizerMode::Whitespace => "whitespace",
        }
    }
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "simple" => Ok(TokenizerMode::Simple),
            "whitespace" => Ok(TokenizerMode::Whitespace),
            other => Err(Error::Config(format!(
                "unknown tokenizer `{other}` (expected simple|whitespace)"
            ))),
        }
    }
}

/// Tokenizer configuration. Case-sensitive unless `lowercase` is set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
    pub lowercase: bool,
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode, lowercase: bool) -> Self {
        Tokenizer { mode, lowercase }
    }

    pub fn tokenize(&self, text: &str) -> TokenizedSentence {
        let normalized: String = if self.lowercase {
            text.nfc().collect::<String>().to_lowercase()
        } else {
            text.nfc().collect()
        };
        let mut out = Vec::new();
        for chunk in normalized.split_whitespace() {
            match self.mode {
                TokenizerMode::Whitespace => out.push(chunk.to_string()),
                TokenizerMode::Simple => split_punctuation(chunk, &mut out),
            }
        }
        TokenizedSentence(out)
    }
}

/// Tokenize with the default configuration (simple, case-sensitive).
pub fn tokenize(text: &str) -> TokenizedSentence {
    Tokenizer::default().tokenize(text)
}

fn split_punctuation(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut start = 0;
    while start < chars.len() && is_punctuation(chars[start].1) {
        out.push(chars[start].1.to_string());
        start += 1;
    }
    if start == chars.len() {
        return;
    }
    let mut end = chars.len();
    while end > start && is_punctuation(chars[end - 1].1) {
        end -= 1;
    }
    let byte_start = chars[start].0;
    let byte_end = if end == chars.len() {
        chunk.len()
    } else {
        chars[end].0
    };
    out.push(chunk[byte_start..byte_end].to_string());
    for &(_, c) in &chars[end..] {
        out.push(c.to_string());
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '¡' | '¿'
                | '«'
                | '»'
                | '‹'
                | '›'
                | '“'
                | '”'
                | '„'
                | '‘'
                | '’'
                | '‚'
                | '…'
                | '–'
                | '—'
                | '·'
                | '、'
                | '。'
                | '，'
                | '：'
                | '；'
                | '！'
                | '？'
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).into_tokens()
    }

    #[test]
    fn detaches_punctuation() {
        assert_eq!(toks("Hello, world!"), ["Hello", ",", "world", "!"]);
    }

    #[test]
    fn collapses_whitespace() {
        assert_eq!(toks("a  b"), ["a", "b"]);
        assert_eq!(toks(" \t a\n b  "), ["a", "b"]);
    }

    #[test]
    fn empty_text() {
        assert!(toks("").is_empty());
        assert!(toks("   ").is_empty());
    }

    #[test]
    fn interior_punctuation_stays() {
        assert_eq!(toks("don't stop 3.5"), ["don't", "stop", "3.5"]);
        assert_eq!(toks("(e-mail)."), ["(", "e-mail", ")", "."]);
        assert_eq!(toks("¿Qué?"), ["¿", "Qué", "?"]);
    }

    #[test]
    fn all_punctuation_chunk() {
        assert_eq!(toks("..."), [".", ".", "."]);
    }

    #[test]
    fn nfc_applied() {
        // "e" + combining acute vs precomposed
        assert_eq!(toks("caf\u{0065}\u{0301}"), toks("caf\u{00e9}"));
    }

    #[test]
    fn whitespace_mode_and_lowercase() {
        let t = Tokenizer::new(TokenizerMode::Whitespace, true);
        assert_eq!(t.tokenize("Hello, World!").into_tokens(), ["hello,", "world!"]);
    }

    #[test]
    fn from_tokens_drops_empty() {
        let t = TokenizedSentence::from_tokens(["a", "", "b c"]);
        assert_eq!(t.tokens(), ["a", "b", "c"]);
    }
}
