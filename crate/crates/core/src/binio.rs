//! Little-endian binary helpers for the index file formats.
//!
//! Checksummed files are laid out as `magic` followed by sections of
//! `tag: [u8; 4] | len: u64 | crc32: u32 | payload[len]`.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Default)]
pub(crate) struct Buf(pub Vec<u8>);

impl Buf {
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.0.extend_from_slice(v);
    }
}

pub(crate) fn write_section(out: &mut impl Write, tag: &[u8; 4], payload: &[u8]) -> Result<()> {
    out.write_all(tag)?;
    out.write_all(&(payload.len() as u64).to_le_bytes())?;
    out.write_all(&crc32fast::hash(payload).to_le_bytes())?;
    out.write_all(payload)?;
    Ok(())
}

/// Bounds-checked reader over a byte slice.
pub(crate) struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    pub fn new(data: &'a [u8], what: &'static str) -> Self {
        Cursor { data, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::format(self.what, "unexpected end of data"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    /// Length prefix that must fit in the remaining data given a minimum
    /// element size. Guards allocations against corrupted counts.
    pub fn count(&mut self, min_elem_size: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(min_elem_size) > self.remaining() {
            return Err(Error::format(self.what, format!("implausible count {n}")));
        }
        Ok(n)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len()).ok() != Some(magic) {
            return Err(Error::format(self.what, "bad magic"));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(
                self.what,
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }

    /// Read the next section, verify its tag and checksum.
    pub fn section(&mut self, tag: &[u8; 4]) -> Result<Cursor<'a>> {
        let found = self.take(4)?;
        if found != tag {
            return Err(Error::format(
                self.what,
                format!(
                    "expected section `{}`, found `{}`",
                    String::from_utf8_lossy(tag),
                    String::from_utf8_lossy(found)
                ),
            ));
        }
        let len = self.u64()? as usize;
        let crc = self.u32()?;
        let payload = self.take(len)?;
        if crc32fast::hash(payload) != crc {
            return Err(Error::Checksum(String::from_utf8_lossy(tag).into_owned()));
        }
        Ok(Cursor::new(payload, self.what))
    }
}
