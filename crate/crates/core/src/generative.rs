//! Generative joint model: Pr(e, q) = Pr(e) Σ_t Σ_z Pr(t|e) Pr(z) Pr(h|t) Pr(s|e).
//!
//! All products are taken in log space; exact zeros become `-inf` and sums
//! use max-shifted exponentiation.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, EntityId, Lemma, TypeId, TypePriorTable};
use crate::error::{Error, Result};
use crate::index::SnippetIndex;
use crate::query::{enumerate_partitions, PartitionMode, Query, QueryView, SwitchVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenHyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for GenHyperParams {
    fn default() -> Self {
        GenHyperParams {
            alpha: 0.1,
            beta: 0.1,
            gamma: 0.1,
            delta: 0.3,
        }
    }
}

impl GenHyperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            check_unit(name, v)?;
        }
        Ok(())
    }
}

pub(crate) fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::HyperParam(format!("{name} must lie in (0,1), got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EntityPrior {
    /// Proportional to the number of snippets.
    #[default]
    Mentions,
    Uniform,
}

/// `(1-β)·1[w ∈ ℓ] + β·(fraction of types with w in some lemma)`.
pub fn type_lm_word_prob(w: &str, lemma: &Lemma, catalog: &Catalog, beta: f64) -> f64 {
    let hit = if lemma.contains(w) { 1.0 } else { 0.0 };
    (1.0 - beta) * hit + beta * catalog.type_fraction(w)
}

/// Words over which hint generation is exact for type `t`: every lemma
/// word of `t` plus the query words.
pub fn type_vocabulary<'a>(t: TypeId, catalog: &'a Catalog, query: &[&'a str]) -> BTreeSet<&'a str> {
    let mut v: BTreeSet<&str> = query.iter().copied().collect();
    for l in catalog.lemmas(t) {
        v.extend(l.tokens.iter().map(String::as_str));
    }
    v
}

/// `Pr(h|t)` with the most favorable lemma.
pub fn hint_given_type(
    hints: &BTreeSet<&str>,
    query: &[&str],
    t: TypeId,
    catalog: &Catalog,
    beta: f64,
) -> f64 {
    log_hint_given_type(hints, query, t, catalog, beta).exp()
}

pub fn log_hint_given_type(
    hints: &BTreeSet<&str>,
    query: &[&str],
    t: TypeId,
    catalog: &Catalog,
    beta: f64,
) -> f64 {
    let vocab = type_vocabulary(t, catalog, query);
    catalog
        .lemmas(t)
        .iter()
        .map(|l| {
            vocab
                .iter()
                .map(|w| {
                    let p = type_lm_word_prob(w, l, catalog, beta);
                    if hints.contains(w) {
                        p.ln()
                    } else {
                        (1.0 - p).ln()
                    }
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `p(w|e)`; the flag is set when `e` has no snippets and the value is the
/// pure background probability.
pub fn snippet_word_prob(w: &str, e: EntityId, index: &SnippetIndex, alpha: f64) -> (f64, bool) {
    let n = index.corpus_count(e);
    let bg = index.background_word_prob(w);
    if n == 0 {
        return (bg, true);
    }
    let ratio = index.corpus_count_with_word(e, w) as f64 / n as f64;
    ((1.0 - alpha) * ratio + alpha * bg, false)
}

/// `Pr(s|e)` over the distinct query words.
pub fn selector_given_entity(
    selectors: &BTreeSet<&str>,
    query: &[&str],
    e: EntityId,
    index: &SnippetIndex,
    alpha: f64,
) -> (f64, bool) {
    let words: BTreeSet<&str> = query.iter().copied().collect();
    let mut fallback = false;
    let mut log = 0.0;
    for w in words {
        let (p, f) = snippet_word_prob(w, e, index, alpha);
        fallback |= f;
        log += if selectors.contains(w) { p.ln() } else { (1.0 - p).ln() };
    }
    (log.exp(), fallback)
}

/// `δ^{#hints} (1-δ)^{#selectors}`.
pub fn switch_prior(z: SwitchVector, delta: f64) -> f64 {
    log_switch_prior(z, delta).exp()
}

pub fn log_switch_prior(z: SwitchVector, delta: f64) -> f64 {
    z.hint_count() as f64 * delta.ln() + z.selector_count() as f64 * (1.0 - delta).ln()
}

/// `Pr(e) = |S_e| / Σ_e' |S_e'|`.
pub fn entity_prior(e: EntityId, index: &SnippetIndex) -> f64 {
    index.entity_prior(e)
}

/// `log Σ exp(x)` in slice order.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One summand of the joint score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub t: TypeId,
    pub z: SwitchVector,
    /// `log(Pr(e) Pr(t|e) Pr(z) Pr(h|t) Pr(s|e))`.
    pub log_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenScore {
    pub entity: EntityId,
    pub log_mass: f64,
    pub best_t: TypeId,
    pub best_z: SwitchVector,
    /// Set when the entity has no snippets and `p(w|e)` fell back to the
    /// background model.
    pub background_only: bool,
    pub table: Option<Vec<TableEntry>>,
}

impl GenScore {
    /// `Pr(e, q)` up to the global constant; may underflow to 0.
    pub fn joint_mass(&self) -> f64 {
        self.log_mass.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenExplanation {
    pub best_t: TypeId,
    pub best_z: SwitchVector,
    /// `Pr(t | e, q)` for each type of the entity, ascending type id.
    pub type_marginals: Vec<(TypeId, f64)>,
    /// `Pr(z_j = h | e, q)` per query position.
    pub hint_marginals: Vec<f64>,
}

/// Per-query precomputation shared by all candidates.
pub struct GenQuery<'r> {
    ranker: &'r GenerativeRanker<'r>,
    pub view: QueryView,
    pub partitions: Vec<SwitchVector>,
    hint_masks: Vec<u16>,
    sel_masks: Vec<u16>,
    log_z: Vec<f64>,
    type_hint_logs: Vec<OnceLock<Vec<f64>>>,
}

pub struct GenerativeRanker<'a> {
    pub catalog: &'a Catalog,
    pub index: &'a SnippetIndex,
    pub priors: &'a TypePriorTable,
    pub hp: GenHyperParams,
    pub mode: PartitionMode,
    pub entity_prior: EntityPrior,
}

impl<'a> GenerativeRanker<'a> {
    pub fn new(
        catalog: &'a Catalog,
        index: &'a SnippetIndex,
        priors: &'a TypePriorTable,
        hp: GenHyperParams,
        mode: PartitionMode,
    ) -> Result<Self> {
        hp.validate()?;
        Ok(GenerativeRanker {
            catalog,
            index,
            priors,
            hp,
            mode,
            entity_prior: EntityPrior::Mentions,
        })
    }

    pub fn with_entity_prior(mut self, prior: EntityPrior) -> Self {
        self.entity_prior = prior;
        self
    }

    pub fn prepare(&self, q: &Query) -> GenQuery<'_> {
        let view = QueryView::new(q, self.index);
        let partitions = enumerate_partitions(q.len(), self.mode);
        let hint_masks = partitions.iter().map(|&z| view.hint_slots(z)).collect();
        let sel_masks = partitions.iter().map(|&z| view.selector_slots(z)).collect();
        let log_z = partitions
            .iter()
            .map(|&z| log_switch_prior(z, self.hp.delta))
            .collect();
        GenQuery {
            ranker: self,
            view,
            partitions,
            hint_masks,
            sel_masks,
            log_z,
            type_hint_logs: (0..self.catalog.num_types()).map(|_| OnceLock::new()).collect(),
        }
    }

    fn log_entity_prior(&self, e: EntityId) -> f64 {
        match self.entity_prior {
            EntityPrior::Mentions => self.index.entity_prior(e).ln(),
            EntityPrior::Uniform => -(self.catalog.num_entities() as f64).ln(),
        }
    }

    pub fn score_entity(&self, q: &Query, e: EntityId, retain_table: bool) -> Result<GenScore> {
        self.prepare(q).score(e, retain_table)
    }

    pub fn rank(&self, q: &Query, candidates: &[EntityId]) -> Result<Vec<GenScore>> {
        self.prepare(q).rank(candidates)
    }

    pub fn explain(&self, q: &Query, e: EntityId) -> Result<GenExplanation> {
        explain_generative(&self.score_entity(q, e, true)?, q.len())
    }
}

impl GenQuery<'_> {
    /// `log Pr(h|t)` for every partition, computed once per type.
    fn hint_logs(&self, t: TypeId) -> &[f64] {
        self.type_hint_logs[t.index()].get_or_init(|| {
            let r = self.ranker;
            let c = r.catalog;
            let beta = r.hp.beta;
            let slots = &self.view.slots;
            // Per lemma: the factor from V_T words outside the query, then
            // `(log p, log (1-p))` per query slot.
            let per_lemma: Vec<(f64, Vec<(f64, f64)>)> = c
                .lemmas(t)
                .iter()
                .map(|l| {
                    let outside: f64 = type_vocabulary(t, c, &[])
                        .into_iter()
                        .filter(|w| !slots.iter().any(|s| s == w))
                        .map(|w| (1.0 - type_lm_word_prob(w, l, c, beta)).ln())
                        .sum();
                    let inside = slots
                        .iter()
                        .map(|w| {
                            let p = type_lm_word_prob(w, l, c, beta);
                            (p.ln(), (1.0 - p).ln())
                        })
                        .collect();
                    (outside, inside)
                })
                .collect();
            self.hint_masks
                .iter()
                .map(|&mask| {
                    per_lemma
                        .iter()
                        .map(|(outside, inside)| {
                            outside
                                + inside
                                    .iter()
                                    .enumerate()
                                    .map(|(i, &(lp, lq))| if mask >> i & 1 == 1 { lp } else { lq })
                                    .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
    }

    /// `(log p(w|e), log(1-p(w|e)))` per slot, and the fallback flag.
    fn snippet_logs(&self, e: EntityId) -> (Vec<(f64, f64)>, bool) {
        let r = self.ranker;
        let n = r.index.corpus_count(e);
        let alpha = r.hp.alpha;
        let logs = self
            .view
            .slots
            .iter()
            .zip(&self.view.word_ids)
            .zip(&self.view.background)
            .map(|((_, wid), &bg)| {
                let p = if n == 0 {
                    bg
                } else {
                    let k = wid.map_or(0, |w| r.index.corpus_count_with(e, w));
                    (1.0 - alpha) * (k as f64 / n as f64) + alpha * bg
                };
                (p.ln(), (1.0 - p).ln())
            })
            .collect();
        (logs, n == 0)
    }

    fn selector_log(logs: &[(f64, f64)], sel: u16) -> f64 {
        logs.iter()
            .enumerate()
            .map(|(i, &(lp, lq))| if sel >> i & 1 == 1 { lp } else { lq })
            .sum()
    }

    /// `log Pr(e) + log Pr(q|e)` with every word a selector and no type.
    pub fn generic_log_score(&self, e: EntityId) -> f64 {
        let (logs, _) = self.snippet_logs(e);
        self.ranker.log_entity_prior(e) + Self::selector_log(&logs, self.view.all_slots())
    }

    pub fn score(&self, e: EntityId, retain_table: bool) -> Result<GenScore> {
        let r = self.ranker;
        let types = r.catalog.types_of(e)?;
        let (slogs, background_only) = self.snippet_logs(e);
        let sel_logs: Vec<f64> = self
            .sel_masks
            .iter()
            .map(|&m| Self::selector_log(&slogs, m))
            .collect();
        let log_pe = r.log_entity_prior(e);

        let mut terms = Vec::with_capacity(types.len() * self.partitions.len());
        let mut table = retain_table.then(Vec::new);
        let mut best = (f64::NEG_INFINITY, types[0], self.partitions[0]);
        for &t in types {
            let log_pt = r.priors.type_prior(r.catalog, t, e)?.ln();
            let hint_logs = self.hint_logs(t);
            for (i, &z) in self.partitions.iter().enumerate() {
                let x = log_pe + log_pt + self.log_z[i] + hint_logs[i] + sel_logs[i];
                if x > best.0 {
                    best = (x, t, z);
                }
                terms.push(x);
                if let Some(tab) = table.as_mut() {
                    tab.push(TableEntry { t, z, log_mass: x });
                }
            }
        }
        Ok(GenScore {
            entity: e,
            log_mass: log_sum_exp(&terms),
            best_t: best.1,
            best_z: best.2,
            background_only,
            table,
        })
    }

    /// Descending joint mass; ties by external entity id.
    pub fn rank(&self, candidates: &[EntityId]) -> Result<Vec<GenScore>> {
        let mut scores = candidates
            .par_iter()
            .map(|&e| self.score(e, false))
            .collect::<Result<Vec<_>>>()?;
        let c = self.ranker.catalog;
        scores.sort_by(|a, b| {
            b.log_mass
                .total_cmp(&a.log_mass)
                .then_with(|| c.entity_name(a.entity).cmp(c.entity_name(b.entity)))
        });
        Ok(scores)
    }
}

/// Argmax `(t, z)` and normalized marginals from a retained table.
pub fn explain_generative(score: &GenScore, query_len: usize) -> Result<GenExplanation> {
    let table = score.table.as_ref().ok_or(Error::TableNotRetained)?;
    let logs: Vec<f64> = table.iter().map(|t| t.log_mass).collect();
    let total = log_sum_exp(&logs);
    let weight = |x: f64| {
        if total == f64::NEG_INFINITY {
            0.0
        } else {
            (x - total).exp()
        }
    };
    let mut type_marginals: Vec<(TypeId, f64)> = Vec::new();
    let mut hint_marginals = vec![0.0; query_len];
    for entry in table {
        let w = weight(entry.log_mass);
        match type_marginals.last_mut() {
            Some((t, m)) if *t == entry.t => *m += w,
            _ => type_marginals.push((entry.t, w)),
        }
        for (j, h) in hint_marginals.iter_mut().enumerate() {
            if entry.z.is_hint(j) {
                *h += w;
            }
        }
    }
    Ok(GenExplanation {
        best_t: score.best_t,
        best_z: score.best_z,
        type_marginals,
        hint_marginals,
    })
}
