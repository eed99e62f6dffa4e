//! Type-restricted IDF-WAND retrieval, document at a time.
//!
//! A query carries a target type, a bag of words and phrases and a window
//! width. A snippet (one mention of an entity `e ∈+ target` plus its window)
//! qualifies when the IDF mass of the terms found inside the window reaches
//! `θ · Σ IDF(terms)`. Phrase weights are the sum of their word IDFs.
//!
//! Term cursors are advanced in lockstep over document ordinals; a document
//! is only opened when the upper bound of the cursors sitting on it reaches
//! the threshold and it holds an in-type mention.

use crate::catalog::{Catalog, EntityId, TypeId};
use crate::error::{Error, Result};
use crate::text::tokenize;

use super::{window_bounds, DocIdx, SnippetIndex, WordId};

/// Slack applied to the pruning bound only, so that a different summation
/// order can never drop a qualifying document.
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryTerm {
    Word(String),
    Phrase(Vec<String>),
}

impl QueryTerm {
    /// Parses `"quoted phrases"` and bare words.
    pub fn parse_all(text: &str) -> Vec<QueryTerm> {
        let mut terms = Vec::new();
        for (i, chunk) in text.split('"').enumerate() {
            let toks = tokenize(chunk);
            if i % 2 == 1 && toks.len() > 1 {
                terms.push(QueryTerm::Phrase(toks));
            } else {
                terms.extend(toks.into_iter().map(QueryTerm::Word));
            }
        }
        terms
    }

    fn words(&self) -> &[String] {
        match self {
            QueryTerm::Word(w) => std::slice::from_ref(w),
            QueryTerm::Phrase(ws) => ws,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WandQuery {
    pub target_type: TypeId,
    pub terms: Vec<QueryTerm>,
    /// Fraction θ ∈ (0, 1] of the total query IDF a snippet must match.
    pub threshold: f64,
    pub window: usize,
}

impl WandQuery {
    pub fn new(target_type: TypeId, terms: Vec<QueryTerm>, threshold: f64, window: usize) -> Self {
        WandQuery {
            target_type,
            terms,
            threshold,
            window,
        }
    }
}

/// One retrieved snippet: a mention plus its context window.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub entity: EntityId,
    pub doc: DocIdx,
    pub span: (u32, u32),
    /// Token range `[lo, hi)` of the window.
    pub window: (usize, usize),
    pub matched_weight: f64,
}

struct TermCursor {
    docs: Vec<DocIdx>,
    pos: usize,
    weight: f64,
}

impl TermCursor {
    fn current(&self) -> Option<DocIdx> {
        self.docs.get(self.pos).copied()
    }

    fn seek(&mut self, target: DocIdx) {
        // Galloping would do; posting lists are short at desk scale.
        let rest = &self.docs[self.pos..];
        self.pos += rest.partition_point(|&d| d < target);
    }
}

/// A resolved term: word ids (None if out of vocabulary) and IDF weight.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedTerm {
    pub words: Vec<Option<WordId>>,
    pub weight: f64,
}

impl ResolvedTerm {
    pub(crate) fn present_in(&self, window: &[WordId]) -> bool {
        let Some(ids) = self.words.iter().copied().collect::<Option<Vec<_>>>() else {
            return false;
        };
        if ids.len() == 1 {
            return window.contains(&ids[0]);
        }
        window.windows(ids.len()).any(|w| w == ids.as_slice())
    }
}

pub(crate) fn resolve_terms(index: &SnippetIndex, terms: &[QueryTerm]) -> Vec<ResolvedTerm> {
    terms
        .iter()
        .map(|t| {
            let words: Vec<Option<WordId>> = t.words().iter().map(|w| index.word_id(w)).collect();
            let weight = t.words().iter().map(|w| index.idf(w)).sum();
            ResolvedTerm { words, weight }
        })
        .collect()
}

/// Lazily produced stream of qualifying snippets, ordered by document and
/// mention position.
pub struct SnippetStream<'a> {
    index: &'a SnippetIndex,
    catalog: &'a Catalog,
    target: TypeId,
    terms: Vec<ResolvedTerm>,
    cursors: Vec<TermCursor>,
    type_docs: Vec<DocIdx>,
    type_pos: usize,
    threshold: f64,
    prune_threshold: f64,
    window: usize,
    buffer: std::collections::VecDeque<Snippet>,
}

impl SnippetIndex {
    /// Starts a type-constrained WAND retrieval.
    pub fn retrieve<'a>(&'a self, catalog: &'a Catalog, q: &WandQuery) -> Result<SnippetStream<'a>> {
        if !catalog.has_type(q.target_type) {
            return Err(Error::UnknownType(q.target_type.to_string()));
        }
        if q.terms.is_empty() {
            return Err(Error::EmptyWandQuery);
        }
        if !(q.threshold > 0.0 && q.threshold <= 1.0) {
            return Err(Error::HyperParam(format!(
                "WAND threshold must lie in (0,1], got {}",
                q.threshold
            )));
        }
        let terms = resolve_terms(self, &q.terms);
        let total: f64 = terms.iter().map(|t| t.weight).sum();
        let cursors = terms
            .iter()
            .filter_map(|t| {
                let docs = self.term_docs(t)?;
                (!docs.is_empty()).then_some(TermCursor {
                    docs,
                    pos: 0,
                    weight: t.weight,
                })
            })
            .collect();

        let mut type_docs: Vec<DocIdx> = catalog
            .members(q.target_type)
            .iter()
            .flat_map(|&e| self.entity_mentions(e).iter().map(|r| r.doc))
            .collect();
        type_docs.sort_unstable();
        type_docs.dedup();

        let threshold = q.threshold * total;
        Ok(SnippetStream {
            index: self,
            catalog,
            target: q.target_type,
            terms,
            cursors,
            type_docs,
            type_pos: 0,
            threshold,
            prune_threshold: threshold * (1.0 - PRUNE_SLACK),
            window: q.window,
            buffer: Default::default(),
        })
    }

    /// Documents containing the term (for phrases, a contiguous occurrence).
    fn term_docs(&self, t: &ResolvedTerm) -> Option<Vec<DocIdx>> {
        let ids: Vec<WordId> = t.words.iter().copied().collect::<Option<_>>()?;
        let first = self.postings(ids[0]);
        if ids.len() == 1 {
            return Some(first.iter().map(|p| p.doc).collect());
        }
        let docs = first
            .iter()
            .filter(|p| {
                let tokens = &self.docs[p.doc.0 as usize].tokens;
                p.positions.iter().any(|&s| {
                    let s = s as usize;
                    s + ids.len() <= tokens.len() && tokens[s..s + ids.len()] == ids[..]
                })
            })
            .map(|p| p.doc)
            .collect();
        Some(docs)
    }
}

impl SnippetStream<'_> {
    fn next_type_doc_at_least(&mut self, target: DocIdx) -> Option<DocIdx> {
        let rest = &self.type_docs[self.type_pos..];
        self.type_pos += rest.partition_point(|&d| d < target);
        self.type_docs.get(self.type_pos).copied()
    }

    /// Opens one document and buffers its qualifying snippets.
    fn score_document(&mut self, d: DocIdx) {
        let doc = &self.index.docs[d.0 as usize];
        for m in &doc.mentions {
            if !self.catalog.is_instance(m.entity, self.target) {
                continue;
            }
            let (lo, hi) = window_bounds(m, doc.tokens.len(), self.window);
            let window = &doc.tokens[lo..hi];
            let mut matched = 0usize;
            let mut weight = 0.0;
            for t in &self.terms {
                if t.present_in(window) {
                    matched += 1;
                    weight += t.weight;
                }
            }
            if matched > 0 && weight >= self.threshold {
                self.buffer.push_back(Snippet {
                    entity: m.entity,
                    doc: d,
                    span: (m.start, m.end),
                    window: (lo, hi),
                    matched_weight: weight,
                });
            }
        }
    }

    /// Advances the WAND state machine to the next document worth opening.
    fn advance(&mut self) -> bool {
        loop {
            self.cursors.retain(|c| c.current().is_some());
            if self.cursors.is_empty() {
                return false;
            }
            self.cursors.sort_by_key(|c| c.current());

            let mut bound = 0.0;
            let mut pivot = None;
            for (i, c) in self.cursors.iter().enumerate() {
                bound += c.weight;
                if bound >= self.prune_threshold {
                    pivot = Some(i);
                    break;
                }
            }
            let Some(pivot) = pivot else {
                return false;
            };
            let pivot_doc = self.cursors[pivot].current().unwrap();

            let Some(type_doc) = self.next_type_doc_at_least(pivot_doc) else {
                return false;
            };
            if type_doc > pivot_doc {
                for c in self.cursors.iter_mut().take(pivot + 1) {
                    c.seek(type_doc);
                }
                continue;
            }

            if self.cursors[0].current() == Some(pivot_doc) {
                self.score_document(pivot_doc);
                for c in self.cursors.iter_mut() {
                    if c.current() == Some(pivot_doc) {
                        c.pos += 1;
                    }
                }
                if !self.buffer.is_empty() {
                    return true;
                }
            } else {
                self.cursors[0].seek(pivot_doc);
            }
        }
    }
}

impl Iterator for SnippetStream<'_> {
    type Item = Snippet;

    fn next(&mut self) -> Option<Snippet> {
        if self.buffer.is_empty() && !self.advance() {
            return None;
        }
        self.buffer.pop_front()
    }
}
