//! In-memory inverted index over an entity-annotated corpus.
//!
//! Besides word postings the index keeps, per entity, its mention locations
//! and the co-occurrence counts `corpusCount(e, w)`: the number of mentions
//! of `e` whose window (the span plus `W` tokens on each side) contains `w`.

mod image;
mod wand;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::catalog::{Catalog, EntityId, Interner};
use crate::error::{Error, Result};
use crate::text::normalize_token;

pub use image::{read_image, write_image, IMAGE_VERSION};
pub use wand::{QueryTerm, Snippet, SnippetStream, WandQuery};

/// Default snippet half-width, in tokens.
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordId(pub u32);

/// Internal document ordinal (input order).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DocIdx(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Mention {
    pub start: u32,
    pub end: u32,
    pub entity: EntityId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<WordId>,
    /// Sorted by span start, non-overlapping.
    pub mentions: Vec<Mention>,
}

/// One corpus line as it appears in `corpus.jsonl`.
#[derive(Debug, Clone, Deserialize, serde::Serialize, PartialEq)]
pub struct RawDocument {
    pub doc_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<(u32, u32, String)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub(crate) struct MentionRef {
    pub doc: DocIdx,
    pub mention: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Posting {
    pub doc: DocIdx,
    pub positions: Vec<u32>,
}

/// Snippet statistics of one entity, as returned by [`SnippetIndex::snippets_of`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySnippets {
    /// False when the entity is unknown to the index.
    pub present: bool,
    /// One sorted word set per snippet, in corpus order.
    pub snippets: Vec<Vec<WordId>>,
    pub corpus_count: u32,
}

#[derive(Debug, Clone)]
pub struct SnippetIndex {
    window: usize,
    vocab: Interner,
    docs: Vec<Document>,
    entity_names: Vec<String>,
    postings: Vec<Vec<Posting>>,
    entity_postings: Vec<Vec<MentionRef>>,
    doc_freq: Vec<u32>,
    mention_count: Vec<u32>,
    /// Per entity, sorted by word.
    cooccur: Vec<Vec<(WordId, u32)>>,
    total_mentions: u64,
}

/// Reads `corpus.jsonl` and indexes it.
pub fn build_index(corpus_file: &Path, catalog: &Catalog, window: usize) -> Result<SnippetIndex> {
    let file = File::open(corpus_file).map_err(|e| Error::io(corpus_file, e))?;
    let name = corpus_file.display().to_string();
    let mut raw = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(corpus_file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            file: name.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        raw.push((i + 1, doc));
    }
    SnippetIndex::build(&name, raw, catalog, window)
}

impl SnippetIndex {
    /// Indexes documents; `line` numbers are only used in error messages.
    pub fn build(
        source: &str,
        docs: impl IntoIterator<Item = (usize, RawDocument)>,
        catalog: &Catalog,
        window: usize,
    ) -> Result<Self> {
        let mut vocab = Interner::default();
        let mut out = Vec::new();
        for (line, raw) in docs {
            let tokens: Vec<WordId> = raw
                .tokens
                .iter()
                .map(|t| WordId(vocab.intern(&normalize_token(t))))
                .collect();
            let mut mentions = Vec::with_capacity(raw.mentions.len());
            for (start, end, entity) in &raw.mentions {
                let Some(e) = catalog.entity_id(entity) else {
                    return Err(Error::DanglingReference {
                        file: source.to_owned(),
                        line,
                        what: "entity",
                        id: entity.clone(),
                    });
                };
                if start >= end || *end as usize > tokens.len() {
                    return Err(Error::SpanOutOfBounds {
                        file: source.to_owned(),
                        line,
                        start: *start,
                        end: *end,
                        len: tokens.len(),
                    });
                }
                mentions.push(Mention {
                    start: *start,
                    end: *end,
                    entity: e,
                });
            }
            mentions.sort_by_key(|m| (m.start, m.end, m.entity));
            mentions.dedup();
            for pair in mentions.windows(2) {
                if pair[1].start < pair[0].end {
                    return Err(Error::OverlappingMentions {
                        file: source.to_owned(),
                        line,
                        first_start: pair[0].start,
                        first_end: pair[0].end,
                        second_start: pair[1].start,
                        second_end: pair[1].end,
                    });
                }
            }
            out.push(Document {
                doc_id: raw.doc_id,
                tokens,
                mentions,
            });
        }
        Ok(Self::from_parts(
            window,
            vocab,
            out,
            catalog.entity_names().to_vec(),
        ))
    }

    pub(crate) fn from_parts(
        window: usize,
        vocab: Interner,
        docs: Vec<Document>,
        entity_names: Vec<String>,
    ) -> Self {
        let n_words = vocab.len();
        let n_entities = entity_names.len();
        let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); n_words];
        let mut doc_freq = vec![0u32; n_words];
        let mut entity_postings: Vec<Vec<MentionRef>> = vec![Vec::new(); n_entities];
        let mut mention_count = vec![0u32; n_entities];
        let mut cooccur_maps: Vec<HashMap<WordId, u32>> = vec![HashMap::new(); n_entities];
        let mut total_mentions = 0u64;
        let mut seen = vec![u32::MAX; n_words];

        for (d, doc) in docs.iter().enumerate() {
            let di = DocIdx(d as u32);
            for (pos, w) in doc.tokens.iter().enumerate() {
                let list = &mut postings[w.0 as usize];
                match list.last_mut() {
                    Some(p) if p.doc == di => p.positions.push(pos as u32),
                    _ => {
                        list.push(Posting {
                            doc: di,
                            positions: vec![pos as u32],
                        });
                        doc_freq[w.0 as usize] += 1;
                    }
                }
            }
            for (mi, m) in doc.mentions.iter().enumerate() {
                let e = m.entity.index();
                entity_postings[e].push(MentionRef {
                    doc: di,
                    mention: mi as u32,
                });
                mention_count[e] += 1;
                total_mentions += 1;
                let (lo, hi) = window_bounds(m, doc.tokens.len(), window);
                // `seen` is keyed by a per-mention stamp so each word counts once.
                let stamp = total_mentions as u32;
                for w in &doc.tokens[lo..hi] {
                    if seen[w.0 as usize] != stamp {
                        seen[w.0 as usize] = stamp;
                        *cooccur_maps[e].entry(*w).or_default() += 1;
                    }
                }
            }
        }
        let cooccur = cooccur_maps
            .into_iter()
            .map(|m| {
                let mut v: Vec<(WordId, u32)> = m.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect();
        SnippetIndex {
            window,
            vocab,
            docs,
            entity_names,
            postings,
            entity_postings,
            doc_freq,
            mention_count,
            cooccur,
            total_mentions,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// `|C|`.
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn word_id(&self, word: &str) -> Option<WordId> {
        self.vocab.get(word).map(WordId)
    }

    pub fn word(&self, w: WordId) -> &str {
        self.vocab.name(w.0)
    }

    pub fn doc_freq(&self, word: &str) -> u32 {
        self.word_id(word).map_or(0, |w| self.doc_freq_id(w))
    }

    pub fn doc_freq_id(&self, w: WordId) -> u32 {
        self.doc_freq.get(w.0 as usize).copied().unwrap_or(0)
    }

    /// `ln(|C| / max(df, 1))`; unseen words get the maximum `ln |C|`.
    pub fn idf(&self, word: &str) -> f64 {
        self.idf_from_df(self.doc_freq(word))
    }

    pub fn idf_id(&self, w: WordId) -> f64 {
        self.idf_from_df(self.doc_freq_id(w))
    }

    fn idf_from_df(&self, df: u32) -> f64 {
        if self.docs.is_empty() {
            return 0.0;
        }
        (self.docs.len() as f64 / df.max(1) as f64).ln()
    }

    /// Fraction of documents containing `word`.
    pub fn background_word_prob(&self, word: &str) -> f64 {
        if self.docs.is_empty() {
            return 0.0;
        }
        self.doc_freq(word) as f64 / self.docs.len() as f64
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    /// `corpusCount(e)`.
    pub fn corpus_count(&self, e: EntityId) -> u32 {
        self.mention_count.get(e.index()).copied().unwrap_or(0)
    }

    /// `corpusCount(e, w)`.
    pub fn corpus_count_with(&self, e: EntityId, w: WordId) -> u32 {
        let Some(list) = self.cooccur.get(e.index()) else {
            return 0;
        };
        match list.binary_search_by_key(&w, |&(x, _)| x) {
            Ok(i) => list[i].1,
            Err(_) => 0,
        }
    }

    /// `corpusCount(e, word)` by surface form.
    pub fn corpus_count_with_word(&self, e: EntityId, word: &str) -> u32 {
        self.word_id(word)
            .map_or(0, |w| self.corpus_count_with(e, w))
    }

    /// Σ_e corpusCount(e).
    pub fn total_mentions(&self) -> u64 {
        self.total_mentions
    }

    /// `Pr(e) = |S_e| / Σ_e' |S_e'|`.
    pub fn entity_prior(&self, e: EntityId) -> f64 {
        if self.total_mentions == 0 {
            return 0.0;
        }
        self.corpus_count(e) as f64 / self.total_mentions as f64
    }

    pub(crate) fn entity_mentions(&self, e: EntityId) -> &[MentionRef] {
        self.entity_postings
            .get(e.index())
            .map_or(&[], Vec::as_slice)
    }

    pub(crate) fn postings(&self, w: WordId) -> &[Posting] {
        &self.postings[w.0 as usize]
    }

    pub(crate) fn mention(&self, r: MentionRef) -> (&Document, &Mention) {
        let doc = &self.docs[r.doc.0 as usize];
        (doc, &doc.mentions[r.mention as usize])
    }

    /// Token range `[lo, hi)` of the snippet around a mention.
    pub fn mention_window(&self, doc: &Document, m: &Mention) -> (usize, usize) {
        window_bounds(m, doc.tokens.len(), self.window)
    }

    /// `S_e`: the word set of every snippet mentioning `e`, optionally
    /// intersected with `restriction`.
    pub fn snippets_of(&self, e: EntityId, restriction: Option<&[WordId]>) -> EntitySnippets {
        if e.index() >= self.entity_names.len() {
            return EntitySnippets {
                present: false,
                snippets: Vec::new(),
                corpus_count: 0,
            };
        }
        let snippets = self
            .entity_mentions(e)
            .iter()
            .map(|&r| {
                let (doc, m) = self.mention(r);
                let (lo, hi) = self.mention_window(doc, m);
                let mut words: Vec<WordId> = doc.tokens[lo..hi]
                    .iter()
                    .copied()
                    .filter(|w| restriction.is_none_or(|r| r.contains(w)))
                    .collect();
                words.sort_unstable();
                words.dedup();
                words
            })
            .collect();
        EntitySnippets {
            present: true,
            snippets,
            corpus_count: self.corpus_count(e),
        }
    }

    /// Each snippet of `e` reduced to a bitmask over `slots`: bit `i` is set
    /// when `slots[i]` occurs in the window. At most 16 slots.
    pub fn snippet_masks(&self, e: EntityId, slots: &[Option<WordId>]) -> Vec<u16> {
        debug_assert!(slots.len() <= 16);
        self.entity_mentions(e)
            .iter()
            .map(|&r| {
                let (doc, m) = self.mention(r);
                let (lo, hi) = self.mention_window(doc, m);
                let mut mask = 0u16;
                for w in &doc.tokens[lo..hi] {
                    for (i, s) in slots.iter().enumerate() {
                        if *s == Some(*w) {
                            mask |= 1 << i;
                        }
                    }
                }
                mask
            })
            .collect()
    }

    pub(crate) fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub(crate) fn vocab(&self) -> &Interner {
        &self.vocab
    }

    pub(crate) fn raw_stats(&self) -> (&[u32], &[u32], &[Vec<(WordId, u32)>]) {
        (&self.doc_freq, &self.mention_count, &self.cooccur)
    }
}

pub(crate) fn window_bounds(m: &Mention, len: usize, window: usize) -> (usize, usize) {
    let lo = (m.start as usize).saturating_sub(window);
    let hi = (m.end as usize + window).min(len);
    (lo, hi)
}
