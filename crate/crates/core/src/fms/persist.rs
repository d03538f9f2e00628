//! `TMNE-FMS1` index file: magic, then checksummed sections
//! `META` (tokenizer), `IDS_`, `LENS`, `DICT`, `POST`, `SRCS`.

use std::collections::HashMap;
use std::io::Write;

use super::index::{FmsIndex, Posting};
use crate::binio::{write_section, Buf, Cursor};
use crate::corpus::{Tokenizer, TokenizerMode};
use crate::error::{Error, Result};

pub const FMS_MAGIC: &[u8; 9] = b"TMNE-FMS1";

impl FmsIndex {
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(FMS_MAGIC)?;

        let mut meta = Buf::default();
        meta.u8(match self.tokenizer.mode {
            TokenizerMode::Simple => 0,
            TokenizerMode::Whitespace => 1,
        });
        meta.u8(u8::from(self.tokenizer.lowercase));
        write_section(&mut out, b"META", &meta.0)?;

        let mut ids = Buf::default();
        ids.u64(self.ids.len() as u64);
        self.ids.iter().for_each(|&v| ids.u64(v));
        write_section(&mut out, b"IDS_", &ids.0)?;

        let mut lens = Buf::default();
        lens.u64(self.lengths.len() as u64);
        self.lengths.iter().for_each(|&v| lens.u32(v));
        write_section(&mut out, b"LENS", &lens.0)?;

        let mut dict = Buf::default();
        dict.u64(self.vocab.len() as u64);
        self.vocab.iter().for_each(|t| dict.bytes(t.as_bytes()));
        write_section(&mut out, b"DICT", &dict.0)?;

        let mut post = Buf::default();
        post.u64(self.postings.len() as u64);
        for list in &self.postings {
            post.u64(list.len() as u64);
            for p in list {
                post.u32(p.row);
                post.u32(p.tf);
            }
        }
        write_section(&mut out, b"POST", &post.0)?;

        let mut srcs = Buf::default();
        srcs.u64(self.sources.len() as u64);
        for s in &self.sources {
            srcs.u64(s.len() as u64);
            s.iter().for_each(|&t| srcs.u32(t));
        }
        write_section(&mut out, b"SRCS", &srcs.0)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    /// Load and validate an index file.
    pub fn from_bytes(data: &[u8]) -> Result<FmsIndex> {
        const WHAT: &str = "FMS index";
        let mut c = Cursor::new(data, WHAT);
        c.expect_magic(FMS_MAGIC)?;

        let mut meta = c.section(b"META")?;
        let mode = match meta.u8()? {
            0 => TokenizerMode::Simple,
            1 => TokenizerMode::Whitespace,
            m => return Err(Error::format(WHAT, format!("unknown tokenizer tag {m}"))),
        };
        let lowercase = meta.u8()? != 0;
        meta.finish()?;

        let mut s = c.section(b"IDS_")?;
        let n = s.count(8)?;
        let ids = (0..n).map(|_| s.u64()).collect::<Result<Vec<_>>>()?;
        s.finish()?;

        let mut s = c.section(b"LENS")?;
        let n = s.count(4)?;
        let lengths = (0..n).map(|_| s.u32()).collect::<Result<Vec<_>>>()?;
        s.finish()?;

        let mut s = c.section(b"DICT")?;
        let n = s.count(4)?;
        let mut vocab = Vec::with_capacity(n);
        for _ in 0..n {
            let b = s.bytes()?;
            vocab.push(
                String::from_utf8(b.to_vec())
                    .map_err(|_| Error::format(WHAT, "token is not UTF-8"))?,
            );
        }
        s.finish()?;

        let mut s = c.section(b"POST")?;
        let n = s.count(8)?;
        let mut postings = Vec::with_capacity(n);
        for _ in 0..n {
            let m = s.count(8)?;
            let mut list = Vec::with_capacity(m);
            for _ in 0..m {
                list.push(Posting {
                    row: s.u32()?,
                    tf: s.u32()?,
                });
            }
            postings.push(list);
        }
        s.finish()?;

        let mut s = c.section(b"SRCS")?;
        let n = s.count(8)?;
        let mut sources = Vec::with_capacity(n);
        for _ in 0..n {
            let m = s.count(4)?;
            sources.push((0..m).map(|_| s.u32()).collect::<Result<Vec<_>>>()?);
        }
        s.finish()?;
        c.finish()?;

        let dict: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let index = FmsIndex {
            tokenizer: Tokenizer::new(mode, lowercase),
            ids,
            lengths,
            vocab,
            dict,
            postings,
            sources,
        };
        index.validate()?;
        Ok(index)
    }

    fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::format("FMS index", d.to_string()));
        let rows = self.ids.len();
        if self.lengths.len() != rows || self.sources.len() != rows {
            return bad("section lengths disagree");
        }
        if self.dict.len() != self.vocab.len() || self.postings.len() != self.vocab.len() {
            return bad("dictionary and postings disagree");
        }
        if self.ids.windows(2).any(|w| w[0] >= w[1]) {
            return bad("TU ids not strictly ascending");
        }
        for (src, &len) in self.sources.iter().zip(&self.lengths) {
            if src.len() != len as usize || src.iter().any(|&t| t as usize >= self.vocab.len()) {
                return bad("stored source inconsistent");
            }
        }
        for list in &self.postings {
            if list.windows(2).any(|w| w[0].row >= w[1].row)
                || list.iter().any(|p| p.row as usize >= rows || p.tf == 0)
            {
                return bad("posting list unsorted or out of range");
            }
        }
        Ok(())
    }
}
