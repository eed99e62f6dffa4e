//! Telegraphic queries and their hint/selector partitions.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, EntityId, TypeId};
use crate::error::{Error, Result};
use crate::index::{SnippetIndex, WordId};
use crate::text::tokenize;

/// Longest accepted query; keeps the exhaustive partition space at 4096.
pub const MAX_QUERY_LEN: usize = 12;
/// Longest contiguous hint run in [`PartitionMode::Contiguous`].
pub const MAX_CONTIGUOUS_HINT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Judgments {
    pub gold_type: Option<TypeId>,
    pub relevant: BTreeSet<EntityId>,
    pub irrelevant: BTreeSet<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub qid: String,
    pub raw: String,
    pub words: Vec<String>,
    pub judgments: Option<Judgments>,
}

impl Query {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_set(&self) -> BTreeSet<&str> {
        self.words.iter().map(String::as_str).collect()
    }

    /// Relevant entities, empty for an unjudged query.
    pub fn relevant(&self) -> &BTreeSet<EntityId> {
        static EMPTY: BTreeSet<EntityId> = BTreeSet::new();
        self.judgments.as_ref().map_or(&EMPTY, |j| &j.relevant)
    }

    pub fn gold_type(&self) -> Option<TypeId> {
        self.judgments.as_ref().and_then(|j| j.gold_type)
    }
}

pub fn parse_query(text: &str) -> Result<Query> {
    let words = tokenize(text);
    if words.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if words.len() > MAX_QUERY_LEN {
        return Err(Error::QueryTooLong {
            len: words.len(),
            cap: MAX_QUERY_LEN,
        });
    }
    Ok(Query {
        qid: String::new(),
        raw: text.to_owned(),
        words,
        judgments: None,
    })
}

/// One line of `queries.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueryRecord {
    pub qid: String,
    pub text: String,
    #[serde(default)]
    pub gold_type: Option<String>,
    #[serde(default)]
    pub relevant: Vec<String>,
    #[serde(default)]
    pub irrelevant: Vec<String>,
}

impl QueryRecord {
    pub fn resolve(&self, catalog: &Catalog) -> Result<Query> {
        let mut q = parse_query(&self.text)?;
        q.qid = self.qid.clone();
        let gold_type = self
            .gold_type
            .as_deref()
            .map(|t| catalog.require_type(t))
            .transpose()?;
        let ids = |names: &[String]| -> Result<BTreeSet<EntityId>> {
            names.iter().map(|n| catalog.require_entity(n)).collect()
        };
        q.judgments = Some(Judgments {
            gold_type,
            relevant: ids(&self.relevant)?,
            irrelevant: ids(&self.irrelevant)?,
        });
        Ok(q)
    }
}

pub fn load_queries(path: &Path, catalog: &Catalog) -> Result<Vec<Query>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            file: path.display().to_string(),
            line: i + 1,
            message,
        };
        let rec: QueryRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        out.push(rec.resolve(catalog).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}

/// Per-position hint (`h`) / selector (`s`) switches. Bit `j` of the mask
/// set means word `j` is a hint.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SwitchVector {
    mask: u16,
    len: u8,
}

impl SwitchVector {
    pub fn new(mask: u16, len: usize) -> Self {
        assert!(len <= 16, "switch vectors hold at most 16 positions");
        debug_assert!(len == 16 || mask >> len == 0);
        SwitchVector {
            mask,
            len: len as u8,
        }
    }

    pub fn all_selector(len: usize) -> Self {
        Self::new(0, len)
    }

    /// Parses `"hss"`-style strings.
    pub fn parse(s: &str) -> Option<Self> {
        let mut mask = 0u16;
        for (j, c) in s.chars().enumerate() {
            match c {
                'h' => mask |= 1 << j,
                's' => {}
                _ => return None,
            }
        }
        (s.len() <= 16).then(|| Self::new(mask, s.len()))
    }

    pub fn mask(self) -> u16 {
        self.mask
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn is_hint(self, j: usize) -> bool {
        self.mask >> j & 1 == 1
    }

    pub fn hint_count(self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn selector_count(self) -> usize {
        self.len() - self.hint_count()
    }

    pub fn has_hints(self) -> bool {
        self.mask != 0
    }
}

impl std::fmt::Display for SwitchVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for j in 0..self.len() {
            f.write_str(if self.is_hint(j) { "h" } else { "s" })?;
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    /// All `2^|q|` switch vectors.
    #[default]
    Exhaustive,
    /// All-selector plus every contiguous hint run of length 1..=3.
    Contiguous,
}

impl std::str::FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(PartitionMode::Exhaustive),
            "contiguous" => Ok(PartitionMode::Contiguous),
            other => Err(Error::Config(format!("unknown partition mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionMode::Exhaustive => "exhaustive",
            PartitionMode::Contiguous => "contiguous",
        })
    }
}

/// Switch vectors for a query of `len` words, ordered by hint mask.
pub fn enumerate_partitions(len: usize, mode: PartitionMode) -> Vec<SwitchVector> {
    match mode {
        PartitionMode::Exhaustive => (0..1u32 << len)
            .map(|m| SwitchVector::new(m as u16, len))
            .collect(),
        PartitionMode::Contiguous => {
            let mut masks = vec![0u16];
            for run in 1..=MAX_CONTIGUOUS_HINT.min(len) {
                for start in 0..=len - run {
                    masks.push(((1u16 << run) - 1) << start);
                }
            }
            masks.sort_unstable();
            masks.into_iter().map(|m| SwitchVector::new(m, len)).collect()
        }
    }
}

fn check_len(q: &Query, z: SwitchVector) -> Result<()> {
    if z.len() != q.len() {
        return Err(Error::SwitchLengthMismatch {
            expected: q.len(),
            got: z.len(),
        });
    }
    Ok(())
}

/// `h(q, z)` as a word set.
pub fn hint_words(q: &Query, z: SwitchVector) -> Result<BTreeSet<&str>> {
    check_len(q, z)?;
    Ok(q.words
        .iter()
        .enumerate()
        .filter(|&(j, _)| z.is_hint(j))
        .map(|(_, w)| w.as_str())
        .collect())
}

/// `s(q, z)` as a word set.
pub fn selector_words(q: &Query, z: SwitchVector) -> Result<BTreeSet<&str>> {
    check_len(q, z)?;
    Ok(q.words
        .iter()
        .enumerate()
        .filter(|&(j, _)| !z.is_hint(j))
        .map(|(_, w)| w.as_str())
        .collect())
}

/// A query resolved against the index: distinct words ("slots", in sorted
/// order), their vocabulary ids, IDFs and background probabilities. Word
/// sets over the query are bitmasks over slots.
#[derive(Debug, Clone)]
pub struct QueryView {
    pub words: Vec<String>,
    pub slots: Vec<String>,
    pub slot_of: Vec<usize>,
    pub word_ids: Vec<Option<WordId>>,
    pub idf: Vec<f64>,
    pub background: Vec<f64>,
    /// `IDF(q)` summed over distinct words.
    pub idf_total: f64,
}

impl QueryView {
    pub fn new(q: &Query, index: &SnippetIndex) -> Self {
        Self::from_words(&q.words, index)
    }

    pub fn from_words(words: &[String], index: &SnippetIndex) -> Self {
        let mut slots: Vec<String> = words.to_vec();
        slots.sort();
        slots.dedup();
        let slot_of = words
            .iter()
            .map(|w| slots.binary_search(w).expect("slot present"))
            .collect();
        let word_ids: Vec<_> = slots.iter().map(|w| index.word_id(w)).collect();
        let idf: Vec<f64> = slots.iter().map(|w| index.idf(w)).collect();
        let background = slots.iter().map(|w| index.background_word_prob(w)).collect();
        let idf_total = idf.iter().sum();
        QueryView {
            words: words.to_vec(),
            slots,
            slot_of,
            word_ids,
            idf,
            background,
            idf_total,
        }
    }

    /// `|q|`, counting repeated words.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn all_slots(&self) -> u16 {
        ((1u32 << self.slots.len()) - 1) as u16
    }

    pub fn hint_slots(&self, z: SwitchVector) -> u16 {
        (0..self.len())
            .filter(|&j| z.is_hint(j))
            .fold(0, |m, j| m | 1 << self.slot_of[j])
    }

    pub fn selector_slots(&self, z: SwitchVector) -> u16 {
        (0..self.len())
            .filter(|&j| !z.is_hint(j))
            .fold(0, |m, j| m | 1 << self.slot_of[j])
    }

    /// Σ IDF over the slots in `mask`, summed in slot order.
    pub fn idf_of(&self, mask: u16) -> f64 {
        self.idf
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask >> i & 1 == 1)
            .fold(0.0, |a, (_, v)| a + v)
    }

    /// Hint words in query order, repeats kept.
    pub fn hint_sequence(&self, z: SwitchVector) -> Vec<&str> {
        (0..self.len())
            .filter(|&j| z.is_hint(j))
            .map(|j| self.words[j].as_str())
            .collect()
    }

    pub fn slot_words(&self, mask: u16) -> impl Iterator<Item = &str> {
        self.slots
            .iter()
            .enumerate()
            .filter(move |&(i, _)| mask >> i & 1 == 1)
            .map(|(_, w)| w.as_str())
    }
}
