use std::path::PathBuf;

/// Errors raised by the retrieval engine and its evaluation tooling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {error}")]
    File { path: PathBuf, error: std::io::Error },

    #[error("input is not valid UTF-8: {0}")]
    Decode(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checksum mismatch in section `{0}`")]
    Checksum(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("undefined: {0}")]
    Degenerate(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidInput(detail.into())
    }

    /// Attach a path to an i/o error.
    pub fn with_path(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            error: source,
        }
    }
}

/// Shorten a protocol line for inclusion in error messages.
pub(crate) fn excerpt(line: &str) -> String {
    const MAX: usize = 160;
    if line.chars().count() <= MAX {
        line.to_string()
    } else {
        let mut s: String = line.chars().take(MAX).collect();
        s.push_str("...");
        s
    }
}
