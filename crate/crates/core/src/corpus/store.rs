//! Persisted corpus files: a header line `tmne-corpus v1 <kind> <count>`
//! followed by one JSON record per line.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{MonoSentence, TestPair, TranslationUnit};
use crate::error::{Error, Result};

const MAGIC: &str = "tmne-corpus";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Tm,
    Mono,
    Test,
}

impl CorpusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusKind::Tm => "tm",
            CorpusKind::Mono => "mono",
            CorpusKind::Test => "test",
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tm" => Ok(CorpusKind::Tm),
            "mono" => Ok(CorpusKind::Mono),
            "test" => Ok(CorpusKind::Test),
            other => Err(Error::Config(format!("unknown corpus kind `{other}`"))),
        }
    }
}

/// Record types that can be stored in a corpus file.
pub trait CorpusRecord: Serialize + DeserializeOwned {
    const KIND: CorpusKind;
}

impl CorpusRecord for TranslationUnit {
    const KIND: CorpusKind = CorpusKind::Tm;
}

impl CorpusRecord for MonoSentence {
    const KIND: CorpusKind = CorpusKind::Mono;
}

impl CorpusRecord for TestPair {
    const KIND: CorpusKind = CorpusKind::Test;
}

pub fn write_corpus<T: CorpusRecord>(mut out: impl Write, records: &[T]) -> Result<()> {
    writeln!(out, "{MAGIC} {VERSION} {} {}", T::KIND, records.len())?;
    for r in records {
        serde_json::to_writer(&mut out, r)
            .map_err(|e| Error::format("corpus record", e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus<T: CorpusRecord>(input: impl BufRead) -> Result<Vec<T>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format("corpus file", "missing header"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(Error::format("corpus file", format!("bad header `{header}`")));
    }
    let kind: CorpusKind = fields[2].parse()?;
    if kind != T::KIND {
        return Err(Error::format(
            "corpus file",
            format!("expected kind `{}`, found `{kind}`", T::KIND),
        ));
    }
    let count: usize = fields[3]
        .parse()
        .map_err(|_| Error::format("corpus file", format!("bad count `{}`", fields[3])))?;

    let mut records = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let rec = serde_json::from_str(&line).map_err(|e| {
            Error::format("corpus file", format!("line {}: {e}", i + 2))
        })?;
        records.push(rec);
    }
    if records.len() != count {
        return Err(Error::format(
            "corpus file",
            format!("header declares {count} records, found {}", records.len()),
        ));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_tm() {
        let tm = vec![
            TranslationUnit {
                id: 0,
                source: "tab\there".into(),
                target: "línea\nnueva".into(),
                doc_id: Some("32019R0001".into()),
            },
            TranslationUnit {
                id: 1,
                source: "b".into(),
                target: "c".into(),
                doc_id: None,
            },
        ];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &tm).unwrap();
        assert!(buf.starts_with(b"tmne-corpus v1 tm 2\n"));
        let back: Vec<TranslationUnit> = read_corpus(&buf[..]).unwrap();
        assert_eq!(back, tm);
    }

    #[test]
    fn kind_mismatch() {
        let mut buf = Vec::new();
        write_corpus::<MonoSentence>(&mut buf, &[]).unwrap();
        assert!(read_corpus::<TranslationUnit>(&buf[..]).is_err());
    }

    #[test]
    fn truncated_file() {
        let data = b"tmne-corpus v1 mono 2\n{\"id\":0,\"text\":\"x\"}\n";
        assert!(read_corpus::<MonoSentence>(&data[..]).is_err());
    }
}
