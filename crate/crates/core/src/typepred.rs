//! Target-type prediction from a ranked entity list, and the entity-centric
//! description baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::catalog::{Catalog, EntityId, TypeId};
use crate::error::{Error, Result};
use crate::generative::log_sum_exp;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub struct EntityTypeRanking {
    pub entity: EntityId,
    /// Types of the entity, best first.
    pub types: Vec<TypeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypePrediction {
    /// `(type, rank sum)`, smallest sum first.
    pub ranked: Vec<(TypeId, u64)>,
    pub k: usize,
    pub per_entity: Vec<EntityTypeRanking>,
}

impl TypePrediction {
    pub fn best(&self) -> TypeId {
        self.ranked[0].0
    }
}

/// Orders types by descending score, ties by ascending type id.
pub fn rank_types(scores: &[(TypeId, f64)]) -> Vec<TypeId> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(t, _)| t).collect()
}

/// Sum-of-ranks aggregation over the top `k` entities of `ranked`.
///
/// The universe is the union of their type sets. A type missing from an
/// entity's list gets rank `|entity's types| + |universe|`.
pub fn predict_type<F>(ranked: &[EntityId], k: usize, mut type_scores: F) -> Result<TypePrediction>
where
    F: FnMut(EntityId) -> Result<Vec<(TypeId, f64)>>,
{
    if k == 0 {
        return Err(Error::HyperParam("k must be >= 1".into()));
    }
    if ranked.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let per_entity = ranked
        .iter()
        .take(k)
        .map(|&e| {
            Ok(EntityTypeRanking {
                entity: e,
                types: rank_types(&type_scores(e)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let universe: BTreeSet<TypeId> = per_entity.iter().flat_map(|r| r.types.iter().copied()).collect();
    let penalty = universe.len() as u64;
    let mut sums: Vec<(TypeId, u64)> = universe
        .iter()
        .map(|&t| {
            let s = per_entity
                .iter()
                .map(|r| match r.types.iter().position(|&x| x == t) {
                    Some(p) => p as u64 + 1,
                    None => r.types.len() as u64 + penalty,
                })
                .sum();
            (t, s)
        })
        .collect();
    sums.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(TypePrediction {
        ranked: sums,
        k,
        per_entity,
    })
}

#[derive(Debug, Deserialize)]
struct DescriptionRecord {
    entity_id: String,
    text: String,
}

/// Term counts of the entity description texts.
#[derive(Debug, Clone, Default)]
pub struct Descriptions {
    per_entity: BTreeMap<EntityId, (BTreeMap<String, u32>, u32)>,
    collection: BTreeMap<String, u64>,
    total: u64,
}

impl Descriptions {
    pub fn from_texts<'a>(catalog: &Catalog, texts: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut d = Descriptions::default();
        for (id, text) in texts {
            let e = catalog.require_entity(id)?;
            d.add(e, text);
        }
        Ok(d)
    }

    fn add(&mut self, e: EntityId, text: &str) {
        let entry = self.per_entity.entry(e).or_default();
        for w in tokenize(text) {
            *entry.0.entry(w.clone()).or_insert(0) += 1;
            entry.1 += 1;
            *self.collection.entry(w).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn load(path: &Path, catalog: &Catalog) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut d = Descriptions::default();
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
            let rec: DescriptionRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let e = catalog
                .entity_id(&rec.entity_id)
                .ok_or_else(|| malformed(format!("unknown entity `{}`", rec.entity_id)))?;
            d.add(e, &rec.text);
        }
        Ok(d)
    }

    pub fn has(&self, e: EntityId) -> bool {
        self.per_entity.get(&e).is_some_and(|(_, n)| *n > 0)
    }

    /// Collection probability `Σ_e tf(w,e) / Σ_e len(e)`.
    pub fn background(&self, w: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.collection.get(w).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// `p(w|θ_e) = (1-μ) tf/len + μ bg(w)`; background only without a
    /// description.
    pub fn word_prob(&self, w: &str, e: EntityId, mu: f64) -> f64 {
        let bg = self.background(w);
        match self.per_entity.get(&e) {
            Some((tf, len)) if *len > 0 => {
                let ratio = tf.get(w).copied().unwrap_or(0) as f64 / *len as f64;
                (1.0 - mu) * ratio + mu * bg
            }
            _ => bg,
        }
    }

    /// `log Pr(q|θ_e) = Σ_{positions} log p(w|θ_e)`.
    pub fn log_query_prob(&self, words: &[String], e: EntityId, mu: f64) -> f64 {
        words.iter().map(|w| self.word_prob(w, e, mu).ln()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnTypeScore {
    pub t: TypeId,
    /// `log Pr(q|t)`, with `Pr(q|t) = Σ_{e ∈+ t} Pr(q|θ_e) / |{e ∈+ t}|`.
    pub log_prob: f64,
    /// Set when some member had no description.
    pub background_only_members: usize,
}

/// Every type with at least one member, best first, ties by type id.
pub fn bn_type_scores(words: &[String], desc: &Descriptions, catalog: &Catalog, mu: f64) -> Result<Vec<BnTypeScore>> {
    crate::generative::check_unit("description smoothing", mu)?;
    let per_entity: Vec<f64> = catalog
        .entity_ids()
        .map(|e| desc.log_query_prob(words, e, mu))
        .collect();
    let mut out: Vec<BnTypeScore> = catalog
        .type_ids()
        .filter(|&t| !catalog.members(t).is_empty())
        .map(|t| {
            let members = catalog.members(t);
            let logs: Vec<f64> = members.iter().map(|e| per_entity[e.index()]).collect();
            BnTypeScore {
                t,
                log_prob: log_sum_exp(&logs) - (members.len() as f64).ln(),
                background_only_members: members.iter().filter(|&&e| !desc.has(e)).count(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then(a.t.cmp(&b.t)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogBuilder;

    fn t(i: u32) -> TypeId {
        TypeId(i)
    }

    #[test]
    fn k1_is_top_entity_best_type() {
        let e = EntityId(0);
        let p = predict_type(&[e, EntityId(1)], 1, |_| Ok(vec![(t(0), 0.5), (t(2), 0.9), (t(1), 0.9)])).unwrap();
        assert_eq!(p.best(), t(1));
        assert_eq!(p.ranked.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn consensus_and_conflict() {
        let scores = |e: EntityId| -> Result<Vec<(TypeId, f64)>> {
            Ok(match e.0 {
                0 => vec![(t(1), 3.0), (t(2), 1.0), (t(0), 0.0)],
                1 => vec![(t(1), 2.0), (t(3), 5.0), (t(0), 0.0)],
                _ => vec![(t(2), 9.0), (t(0), 1.0)],
            })
        };
        let p = predict_type(&[EntityId(0), EntityId(1)], 2, scores).unwrap();
        // universe {0,1,2,3}: t1 = 1+2, t3 = (3+4)+1, t2 = 2+(3+4), t0 = 3+3.
        assert_eq!(p.ranked, vec![(t(1), 3), (t(0), 6), (t(3), 8), (t(2), 9)]);
        let p = predict_type(&[EntityId(0), EntityId(1), EntityId(2)], 3, scores).unwrap();
        // t0: 3+3+2 = 8; t1: 1+2+(2+4)=9; t2: 2+(3+4)+1=10; t3: (3+4)+1+(2+4)=14
        assert_eq!(p.ranked, vec![(t(0), 8), (t(1), 9), (t(2), 10), (t(3), 14)]);
        assert!(matches!(predict_type(&[], 1, scores), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn rank_aggregation_ignores_monotone_transforms() {
        let base = |_: EntityId| Ok(vec![(t(0), 0.1), (t(1), 2.0), (t(2), -1.0)]);
        let warped = |_: EntityId| Ok(vec![(t(0), 0.1f64.exp()), (t(1), 2f64.exp()), (t(2), (-1f64).exp())]);
        let ids = [EntityId(0), EntityId(1)];
        assert_eq!(predict_type(&ids, 2, base).unwrap().ranked, predict_type(&ids, 2, warped).unwrap().ranked);
    }

    #[test]
    fn bn_hand_computation() {
        let mut b = CatalogBuilder::new();
        b.add_type("Entity", &[])
            .add_type("ta", &["Entity"])
            .add_lemma("ta", "a")
            .add_type("tb", &["Entity"])
            .add_lemma("tb", "b")
            .add_entity("x", &["ta"])
            .add_entity("y", &["ta"])
            .add_entity("z", &["tb"]);
        let c = b.build().unwrap();
        let d = Descriptions::from_texts(&c, [("x", "red red blue"), ("y", "blue"), ("z", "green red")]).unwrap();
        let mu = 0.2;
        let q: Vec<String> = vec!["red".into(), "blue".into()];
        // collection: red 3, blue 2, green 1 over 6 tokens.
        let (bg_r, bg_b) = (3.0 / 6.0, 2.0 / 6.0);
        let px = (0.8 * 2.0 / 3.0 + mu * bg_r) * (0.8 / 3.0 + mu * bg_b);
        let py = (mu * bg_r) * (0.8 + mu * bg_b);
        let pz = (0.8 * 0.5 + mu * bg_r) * (mu * bg_b);
        let scores = bn_type_scores(&q, &d, &c, mu).unwrap();
        let get = |name: &str| {
            let id = c.type_id(name).unwrap();
            scores.iter().find(|s| s.t == id).unwrap().log_prob.exp()
        };
        let close = |a: f64, b: f64| assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
        close(get("ta"), (px + py) / 2.0);
        close(get("tb"), pz);
        close(get("Entity"), (px + py + pz) / 3.0);
    }
}
