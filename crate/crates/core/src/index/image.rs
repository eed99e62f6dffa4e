//! Single-file serialized index image.
//!
//! Layout (all integers little-endian):
//! `magic[8] version:u32 window:u64`, then length-prefixed sections for the
//! entity table, vocabulary, documents, document frequencies, mention
//! counts and co-occurrence counts. Postings are rebuilt on load and the
//! stored statistics are checked against the rebuilt ones.

use std::fs;
use std::path::Path;

use crate::catalog::{Catalog, EntityId, Interner};
use crate::error::{Error, Result};

use super::{Document, Mention, SnippetIndex, WordId};

const MAGIC: &[u8; 8] = b"TERIDX\0\0";
pub const IMAGE_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("section too large for image format"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::IndexImage(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::IndexImage("invalid UTF-8 string".into()))
    }
}

pub fn write_image(index: &SnippetIndex, path: &Path) -> Result<()> {
    fs::write(path, encode(index)).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode(index: &SnippetIndex) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(IMAGE_VERSION);
    w.u64(index.window() as u64);

    let names = index.entity_names();
    w.len(names.len());
    for n in names {
        w.str(n);
    }
    let vocab = index.vocab().names();
    w.len(vocab.len());
    for v in vocab {
        w.str(v);
    }
    w.len(index.documents().len());
    for d in index.documents() {
        w.str(&d.doc_id);
        w.len(d.tokens.len());
        for t in &d.tokens {
            w.u32(t.0);
        }
        w.len(d.mentions.len());
        for m in &d.mentions {
            w.u32(m.start);
            w.u32(m.end);
            w.u32(m.entity.0);
        }
    }
    let (df, mc, co) = index.raw_stats();
    w.len(df.len());
    df.iter().for_each(|&v| w.u32(v));
    w.len(mc.len());
    mc.iter().for_each(|&v| w.u32(v));
    w.len(co.len());
    for list in co {
        w.len(list.len());
        for &(word, n) in list {
            w.u32(word.0);
            w.u32(n);
        }
    }
    w.0
}

/// Loads an image written by [`write_image`]; the entity table must match
/// `catalog` exactly.
pub fn read_image(path: &Path, catalog: &Catalog) -> Result<SnippetIndex> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, catalog)
}

pub(crate) fn decode(bytes: &[u8], catalog: &Catalog) -> Result<SnippetIndex> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::IndexImage("bad magic".into()));
    }
    let version = r.u32()?;
    if version != IMAGE_VERSION {
        return Err(Error::IndexVersion {
            found: version,
            expected: IMAGE_VERSION,
        });
    }
    let window = r.u64()? as usize;

    let n = r.len()?;
    let mut names = Vec::with_capacity(n);
    for _ in 0..n {
        names.push(r.str()?);
    }
    if names != catalog.entity_names() {
        return Err(Error::IndexImage(
            "entity table does not match the loaded catalog".into(),
        ));
    }
    let n = r.len()?;
    let mut vocab = Interner::default();
    for i in 0..n {
        let s = r.str()?;
        if vocab.intern(&s) as usize != i {
            return Err(Error::IndexImage(format!("duplicate vocabulary entry `{s}`")));
        }
    }
    let n_docs = r.len()?;
    let mut docs = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let doc_id = r.str()?;
        let nt = r.len()?;
        let mut tokens = Vec::with_capacity(nt);
        for _ in 0..nt {
            let t = r.u32()?;
            if t as usize >= vocab.len() {
                return Err(Error::IndexImage(format!("token id {t} out of range")));
            }
            tokens.push(WordId(t));
        }
        let nm = r.len()?;
        let mut mentions = Vec::with_capacity(nm);
        for _ in 0..nm {
            let (start, end, e) = (r.u32()?, r.u32()?, r.u32()?);
            if e as usize >= names.len() || start >= end || end as usize > tokens.len() {
                return Err(Error::IndexImage("invalid mention record".into()));
            }
            mentions.push(Mention {
                start,
                end,
                entity: EntityId(e),
            });
        }
        docs.push(Document {
            doc_id,
            tokens,
            mentions,
        });
    }
    let read_u32s = |r: &mut Reader| -> Result<Vec<u32>> {
        let n = r.len()?;
        (0..n).map(|_| r.u32()).collect()
    };
    let df = read_u32s(&mut r)?;
    let mc = read_u32s(&mut r)?;
    let n = r.len()?;
    let mut co = Vec::with_capacity(n);
    for _ in 0..n {
        let m = r.len()?;
        let mut list = Vec::with_capacity(m);
        for _ in 0..m {
            list.push((WordId(r.u32()?), r.u32()?));
        }
        co.push(list);
    }
    if r.pos != bytes.len() {
        return Err(Error::IndexImage("trailing bytes after last section".into()));
    }

    let index = SnippetIndex::from_parts(window, vocab, docs, names);
    let (df2, mc2, co2) = index.raw_stats();
    if df != df2 || mc != mc2 || co != co2 {
        return Err(Error::IndexImage(
            "stored statistics disagree with document section".into(),
        ));
    }
    Ok(index)
}
