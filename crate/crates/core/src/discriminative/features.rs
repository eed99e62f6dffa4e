//! Feature map φ(q, e, t, z) = [φ1(q,e), φ2(t,e), φ3(q,z,t), φ4(q,z,e)].
//!
//! Summation order is fixed so results are reproducible bit for bit: set
//! IDFs add slot weights in ascending (sorted word) order, snippet sums run
//! in index order, and lemma-model products run over the type vocabulary in
//! sorted order.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::catalog::{Catalog, EntityId, TypeId, TypePriorTable};
use crate::error::Result;
use crate::generative::{type_lm_word_prob, type_vocabulary};
use crate::index::SnippetIndex;
use crate::query::{enumerate_partitions, PartitionMode, Query, QueryView, SwitchVector};

pub const LAYOUT_VERSION: u32 = 1;
pub const NUM_FEATURES: usize = 12;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "phi1_support",
    "phi1_self_mention",
    "phi2_prior",
    "phi2_generality",
    "phi3_lm",
    "phi3_exact",
    "phi3_len_lt_1",
    "phi3_len_lt_2",
    "phi3_len_lt_3",
    "phi4_cover",
    "phi4_subset",
    "phi4_exact_full",
];

pub type FeatureVector = [f64; NUM_FEATURES];

pub fn dot(lambda: &[f64], phi: &FeatureVector) -> f64 {
    let mut s = 0.0;
    for k in 0..NUM_FEATURES {
        s += lambda[k] * phi[k];
    }
    s
}

fn idf_of(view: &QueryView, mask: u16) -> f64 {
    let mut s = 0.0;
    for (i, v) in view.idf.iter().enumerate() {
        if mask >> i & 1 == 1 {
            s += v;
        }
    }
    s
}

/// `2^|q| · IDF(q)`; zero flags a degenerate query.
fn normalizer(view: &QueryView) -> f64 {
    (1u64 << view.len()) as f64 * idf_of(view, view.all_slots())
}

/// `[support, self_mention]`.
pub fn phi1(view: &QueryView, e: EntityId, index: &SnippetIndex, catalog: &Catalog) -> [f64; 2] {
    let masks = index.snippet_masks(e, &view.word_ids);
    phi1_from_masks(view, &masks, catalog.entity_name_tokens(e))
}

fn phi1_from_masks(view: &QueryView, masks: &[u16], name: &[String]) -> [f64; 2] {
    let norm = normalizer(view);
    let support = if norm == 0.0 {
        0.0
    } else {
        let mut s = 0.0;
        for &m in masks {
            s += idf_of(view, m);
        }
        s / norm
    };
    let self_mention = !name.is_empty() && name.iter().all(|w| view.slots.binary_search(w).is_ok());
    [support, if self_mention { 1.0 } else { 0.0 }]
}

/// `[type_prior, generality]`.
pub fn phi2(t: TypeId, e: EntityId, priors: &TypePriorTable, catalog: &Catalog) -> Result<[f64; 2]> {
    Ok([priors.type_prior(catalog, t, e)?, catalog.type_generality(t)?])
}

/// Hint-generation probability with the best lemma, as a plain product.
pub fn lemma_model(hints: &BTreeSet<&str>, query: &[&str], t: TypeId, catalog: &Catalog, beta: f64) -> f64 {
    let vocab = type_vocabulary(t, catalog, query);
    let mut best = 0.0f64;
    for l in catalog.lemmas(t) {
        let mut p = 1.0;
        for w in &vocab {
            let pw = type_lm_word_prob(w, l, catalog, beta);
            p *= if hints.contains(w) { pw } else { 1.0 - pw };
        }
        best = best.max(p);
    }
    best
}

/// `[lm, exact, |h|<1, |h|<2, |h|<3]`, with `|h|` the number of distinct
/// hint words.
pub fn phi3(view: &QueryView, z: SwitchVector, t: TypeId, catalog: &Catalog, beta: f64) -> [f64; 5] {
    let hint_mask = view.hint_slots(z);
    let hints: BTreeSet<&str> = view.slot_words(hint_mask).collect();
    let query: Vec<&str> = view.slots.iter().map(String::as_str).collect();
    let lm = lemma_model(&hints, &query, t, catalog, beta);
    let seq = view.hint_sequence(z);
    let exact = !seq.is_empty()
        && catalog
            .lemmas(t)
            .iter()
            .any(|l| l.tokens.iter().map(String::as_str).eq(seq.iter().copied()));
    let n = hints.len();
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    [lm, flag(exact), flag(n < 1), flag(n < 2), flag(n < 3)]
}

/// `[cover, subset, exact_full]`.
pub fn phi4(view: &QueryView, z: SwitchVector, e: EntityId, index: &SnippetIndex) -> [f64; 3] {
    let masks = index.snippet_masks(e, &view.word_ids);
    phi4_from_masks(view, view.selector_slots(z), &masks)
}

fn phi4_from_masks(view: &QueryView, sel: u16, masks: &[u16]) -> [f64; 3] {
    if masks.is_empty() {
        return [0.0; 3];
    }
    let all = view.all_slots();
    let exact = masks.iter().filter(|&&m| m == all).count() as f64 / masks.len() as f64;
    let norm = normalizer(view);
    if norm == 0.0 {
        return [0.0, 0.0, exact];
    }
    let mut covering = 0usize;
    let mut rest = 0.0;
    for &m in masks {
        if m & sel == sel {
            covering += 1;
        } else {
            rest += idf_of(view, m);
        }
    }
    let cover = idf_of(view, sel) * covering as f64 / norm;
    [cover, rest / norm, exact]
}

fn assemble(p1: [f64; 2], p2: [f64; 2], p3: &[f64; 5], p4: &[f64; 3]) -> FeatureVector {
    [
        p1[0], p1[1], p2[0], p2[1], p3[0], p3[1], p3[2], p3[3], p3[4], p4[0], p4[1], p4[2],
    ]
}

/// Per-query feature context: partitions and lazily cached φ3 per type.
pub struct FeatureQuery<'a> {
    pub catalog: &'a Catalog,
    pub index: &'a SnippetIndex,
    pub priors: &'a TypePriorTable,
    pub beta: f64,
    pub view: QueryView,
    pub partitions: Vec<SwitchVector>,
    phi3_cache: Vec<OnceLock<Vec<[f64; 5]>>>,
}

/// Everything about one candidate that does not depend on `(t, z)` jointly.
#[derive(Debug, Clone)]
pub struct EntityFeatures {
    pub entity: EntityId,
    pub types: Vec<TypeId>,
    pub phi1: [f64; 2],
    pub phi2: Vec<[f64; 2]>,
    pub phi4: Vec<[f64; 3]>,
}

/// A latent choice: index into the entity's types and into the partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Latent {
    pub type_idx: usize,
    pub z_idx: usize,
}

impl<'a> FeatureQuery<'a> {
    pub fn new(
        q: &Query,
        catalog: &'a Catalog,
        index: &'a SnippetIndex,
        priors: &'a TypePriorTable,
        beta: f64,
        mode: PartitionMode,
    ) -> Self {
        let view = QueryView::new(q, index);
        FeatureQuery {
            catalog,
            index,
            priors,
            beta,
            partitions: enumerate_partitions(q.len(), mode),
            view,
            phi3_cache: (0..catalog.num_types()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn phi3_row(&self, t: TypeId) -> &[[f64; 5]] {
        self.phi3_cache[t.index()].get_or_init(|| {
            self.partitions
                .iter()
                .map(|&z| phi3(&self.view, z, t, self.catalog, self.beta))
                .collect()
        })
    }

    pub fn entity(&self, e: EntityId) -> Result<EntityFeatures> {
        let types = self.catalog.types_of(e)?.to_vec();
        let masks = self.index.snippet_masks(e, &self.view.word_ids);
        let phi1 = phi1_from_masks(&self.view, &masks, self.catalog.entity_name_tokens(e));
        let phi2 = types
            .iter()
            .map(|&t| phi2(t, e, self.priors, self.catalog))
            .collect::<Result<_>>()?;
        let phi4 = self
            .partitions
            .iter()
            .map(|&z| phi4_from_masks(&self.view, self.view.selector_slots(z), &masks))
            .collect();
        Ok(EntityFeatures {
            entity: e,
            types,
            phi1,
            phi2,
            phi4,
        })
    }

    /// Admissible `(t, z)` pairs in enumeration order: types ascending,
    /// partitions by hint mask; the hint-free partition only with the root.
    pub fn latents<'b>(&'b self, ef: &'b EntityFeatures) -> impl Iterator<Item = Latent> + 'b {
        let root = self.catalog.root();
        ef.types.iter().enumerate().flat_map(move |(ti, &t)| {
            self.partitions
                .iter()
                .enumerate()
                .filter(move |&(_, z)| z.has_hints() || t == root)
                .map(move |(zi, _)| Latent { type_idx: ti, z_idx: zi })
        })
    }

    pub fn features(&self, ef: &EntityFeatures, l: Latent) -> FeatureVector {
        let t = ef.types[l.type_idx];
        assemble(
            ef.phi1,
            ef.phi2[l.type_idx],
            &self.phi3_row(t)[l.z_idx],
            &ef.phi4[l.z_idx],
        )
    }

    pub fn type_of(&self, ef: &EntityFeatures, l: Latent) -> TypeId {
        ef.types[l.type_idx]
    }

    pub fn switch_of(&self, l: Latent) -> SwitchVector {
        self.partitions[l.z_idx]
    }
}
