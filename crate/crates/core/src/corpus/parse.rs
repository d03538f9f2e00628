use std::io::Read;

use serde::Serialize;

use super::{MonoSentence, TestPair, TranslationUnit};
use crate::error::{Error, Result};

/// Language selection for TMX input. When a language is unset the first
/// (source) or second (target) `tuv` of each `tu` is used.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TmxLanguages {
    pub source: Option<String>,
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TmFormat {
    Tsv,
    Tmx(TmxLanguages),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub skipped: Vec<Skipped>,
}

impl SkipReport {
    pub fn count(&self) -> usize {
        self.skipped.len()
    }

    pub(crate) fn push(&mut self, line: usize, reason: impl Into<String>) {
        self.skipped.push(Skipped {
            line,
            reason: reason.into(),
        });
    }
}

/// Parsed records plus the rows that could not be used.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub skips: SkipReport,
    /// Number of rows (or `tu` elements) examined.
    pub rows: usize,
}

impl<T> Parsed<T> {
    /// Fraction of examined rows that were skipped.
    pub fn skip_rate(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.skips.count() as f64 / self.rows as f64
        }
    }
}

fn read_utf8(mut stream: impl Read) -> Result<String> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes)?;
    String::from_utf8(bytes).map_err(|e| {
        Error::Decode(format!("invalid byte at offset {}", e.utf8_error().valid_up_to()))
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

struct Row {
    first: String,
    second: String,
    doc_id: Option<String>,
}

fn parse_rows(text: &str) -> Parsed<Row> {
    let mut items = Vec::new();
    let mut skips = SkipReport::default();
    let mut rows = 0;
    for (line_no, line) in lines(text) {
        rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            skips.push(
                line_no,
                format!("expected 2 or 3 tab-separated columns, found {}", cols.len()),
            );
            continue;
        }
        let first = cols[0].trim();
        let second = cols[1].trim();
        if first.is_empty() || second.is_empty() {
            skips.push(line_no, "empty sentence");
            continue;
        }
        let doc_id = cols
            .get(2)
            .map(|d| d.trim())
            .filter(|d| !d.is_empty())
            .map(str::to_string);
        items.push(Row {
            first: first.to_string(),
            second: second.to_string(),
            doc_id,
        });
    }
    Parsed { items, skips, rows }
}

/// Parse a translation memory. Ids are assigned from 0 in input order.
pub fn parse_tm(stream: impl Read, format: TmFormat) -> Result<Parsed<TranslationUnit>> {
    let text = read_utf8(stream)?;
    match format {
        TmFormat::Tsv => {
            let parsed = parse_rows(&text);
            Ok(Parsed {
                items: parsed
                    .items
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| TranslationUnit {
                        id: i as u64,
                        source: r.first,
                        target: r.second,
                        doc_id: r.doc_id,
                    })
                    .collect(),
                skips: parsed.skips,
                rows: parsed.rows,
            })
        }
        TmFormat::Tmx(langs) => parse_tmx(&text, &langs),
    }
}

/// Parse a test set: `source<TAB>reference[<TAB>doc_id]`.
pub fn parse_test_set(stream: impl Read) -> Result<Parsed<TestPair>> {
    let parsed = parse_tm(stream, TmFormat::Tsv)?;
    Ok(Parsed {
        items: parsed.items.into_iter().map(TestPair::from).collect(),
        skips: parsed.skips,
        rows: parsed.rows,
    })
}

/// Parse a plain-text monolingual corpus, one sentence per line.
pub fn parse_mono(stream: impl Read) -> Result<Parsed<MonoSentence>> {
    let text = read_utf8(stream)?;
    let mut items = Vec::new();
    let mut skips = SkipReport::default();
    let mut rows = 0;
    for (line_no, line) in lines(&text) {
        rows += 1;
        let t = line.trim();
        if t.is_empty() {
            skips.push(line_no, "empty sentence");
            continue;
        }
        items.push(MonoSentence {
            id: items.len() as u64,
            text: t.to_string(),
            doc_id: None,
        });
    }
    Ok(Parsed { items, skips, rows })
}

fn lang_matches(wanted: &str, actual: &str) -> bool {
    let wanted = wanted.to_ascii_lowercase();
    let actual = actual.to_ascii_lowercase();
    actual == wanted
        || actual
            .strip_prefix(&wanted)
            .is_some_and(|rest| rest.starts_with('-') || rest.starts_with('_'))
}

fn parse_tmx(text: &str, langs: &TmxLanguages) -> Result<Parsed<TranslationUnit>> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| Error::format("TMX document", e.to_string()))?;
    let mut items = Vec::new();
    let mut skips = SkipReport::default();
    let mut rows = 0;

    for tu in doc.descendants().filter(|n| n.has_tag_name("tu")) {
        rows += 1;
        let line = doc.text_pos_at(tu.range().start).row as usize;
        let mut tuvs: Vec<(Option<&str>, String)> = Vec::new();
        for tuv in tu.children().filter(|n| n.has_tag_name("tuv")) {
            let lang = tuv
                .attribute((roxmltree::NS_XML_URI, "lang"))
                .or_else(|| tuv.attribute("lang"));
            let Some(seg) = tuv.children().find(|n| n.has_tag_name("seg")) else {
                continue;
            };
            let seg_text: String = seg
                .descendants()
                .filter(|n| n.is_text())
                .filter_map(|n| n.text())
                .collect();
            tuvs.push((lang, seg_text.trim().to_string()));
        }

        let pick = |wanted: &Option<String>, fallback: usize| -> Option<&String> {
            match wanted {
                Some(w) => tuvs
                    .iter()
                    .find(|(l, _)| l.is_some_and(|l| lang_matches(w, l)))
                    .map(|(_, s)| s),
                None => tuvs.get(fallback).map(|(_, s)| s),
            }
        };
        let (Some(source), Some(target)) = (pick(&langs.source, 0), pick(&langs.target, 1))
        else {
            skips.push(line, "tu lacks a source or target tuv/seg");
            continue;
        };
        if source.is_empty() || target.is_empty() {
            skips.push(line, "empty sentence");
            continue;
        }
        items.push(TranslationUnit {
            id: items.len() as u64,
            source: source.clone(),
            target: target.clone(),
            doc_id: None,
        });
    }
    Ok(Parsed { items, skips, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_direct_mapping() {
        let p = parse_tm("hello\thola\n".as_bytes(), TmFormat::Tsv).unwrap();
        assert_eq!(
            p.items,
            vec![TranslationUnit {
                id: 0,
                source: "hello".into(),
                target: "hola".into(),
                doc_id: None
            }]
        );
        assert_eq!(p.skips.count(), 0);
    }

    #[test]
    fn tsv_single_column_skipped() {
        let p = parse_tm("only one column\nhello\thola\t32019R0001\n".as_bytes(), TmFormat::Tsv)
            .unwrap();
        assert_eq!(p.skips.count(), 1);
        assert_eq!(p.skips.skipped[0].line, 1);
        assert_eq!(p.items.len(), 1);
        assert_eq!(p.items[0].id, 0);
        assert_eq!(p.items[0].doc_id.as_deref(), Some("32019R0001"));
        assert_eq!(p.rows, 2);
    }

    #[test]
    fn tsv_ids_follow_input_order() {
        let p = parse_tm("a\tb\nbad\nc\td\r\ne\tf".as_bytes(), TmFormat::Tsv).unwrap();
        let ids: Vec<u64> = p.items.iter().map(|t| t.id).collect();
        assert_eq!(ids, [0, 1, 2]);
        assert_eq!(p.items[1].target, "d");
    }

    #[test]
    fn invalid_utf8_is_hard_error() {
        let err = parse_tm(&b"a\t\xff\xfe\n"[..], TmFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::Decode(_)));
    }

    const TMX: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<tmx version="1.4">
  <header srclang="en"/>
  <body>
    <tu tuid="1">
      <tuv xml:lang="en"><seg>dog</seg></tuv>
      <tuv xml:lang="es"><seg>perro</seg></tuv>
    </tu>
    <tu>
      <tuv xml:lang="en"><seg>lonely</seg></tuv>
    </tu>
    <tu>
      <tuv xml:lang="es-ES"><seg>el <bpt i="1">&lt;b&gt;</bpt>gato</seg></tuv>
      <tuv xml:lang="EN-GB"><seg>the cat &amp; co</seg></tuv>
    </tu>
  </body>
</tmx>"#;

    #[test]
    fn tmx_subset() {
        let langs = TmxLanguages {
            source: Some("en".into()),
            target: Some("es".into()),
        };
        let p = parse_tm(TMX.as_bytes(), TmFormat::Tmx(langs)).unwrap();
        assert_eq!(p.rows, 3);
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.items[0].source, "dog");
        assert_eq!(p.items[0].target, "perro");
        assert_eq!(p.items[1].source, "the cat & co");
        assert_eq!(p.items[1].target, "el <b>gato");
        assert_eq!(p.skips.count(), 1);
        assert_eq!(p.skips.skipped[0].line, 9);
    }

    #[test]
    fn tmx_positional_fallback() {
        let p = parse_tm(TMX.as_bytes(), TmFormat::Tmx(TmxLanguages::default())).unwrap();
        assert_eq!(p.items[0].source, "dog");
        assert_eq!(p.items[1].source, "el <b>gato");
    }

    #[test]
    fn tmx_not_xml() {
        assert!(parse_tm("<tmx".as_bytes(), TmFormat::Tmx(TmxLanguages::default())).is_err());
    }

    #[test]
    fn mono_lines() {
        let p = parse_mono("uno\n\n  dos \n".as_bytes()).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.items[1].text, "dos");
        assert_eq!(p.items[1].id, 1);
        assert_eq!(p.skips.skipped[0].line, 2);
    }
}
