//! Max-margin constraint system over training queries.
//!
//! Every slack group `g` carries a weight `w_g` and affine pieces
//! `b_k + a_k·λ`; its loss is `w_g · max(0, max_k (b_k + a_k·λ))`.
//!
//! * itemwise positive `(q, e+)`: one piece `a = -Σ u φ`, `b = 1`
//! * itemwise negative `(q, e-)`: one piece per latent, `a = φ_k`, `b = 1`
//! * pairwise `(q, e+, e-)`: one piece per latent of `e-`, `a = φ_k - Σ u φ(e+)`, `b = 1`
//! * pairwise with weighted negatives: one piece, `a = Σ u φ(e-) - Σ u φ(e+)`, `b = 1`
//!
//! With weighted negatives `u` lists the positives first and then the
//! negatives.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::catalog::{Catalog, EntityId, TypeId, TypePriorTable};
use crate::error::{Error, Result};
use crate::index::SnippetIndex;
use crate::query::{Query, SwitchVector};

use super::features::{dot, FeatureQuery, FeatureVector, NUM_FEATURES};
use super::{DiscHyperParams, NegativeLatents, TrainMode};

#[derive(Debug, Clone)]
pub struct TrainingQuery {
    pub query: Query,
    pub positives: Vec<EntityId>,
    pub negatives: Vec<EntityId>,
}

impl TrainingQuery {
    /// Positives are the judged relevant entities, negatives the judged
    /// irrelevant ones.
    pub fn from_judged(q: &Query) -> Option<Self> {
        let j = q.judgments.as_ref()?;
        Some(TrainingQuery {
            query: q.clone(),
            positives: j.relevant.iter().copied().collect(),
            negatives: j.irrelevant.iter().copied().collect(),
        })
    }
}

/// One `(q, e)` item with the features of all its admissible latents.
#[derive(Debug, Clone)]
pub struct Item {
    pub query: usize,
    pub entity: EntityId,
    pub features: Vec<FeatureVector>,
    pub latents: Vec<(TypeId, SwitchVector)>,
}

#[derive(Debug, Clone)]
pub struct QueryBlock {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub mode: TrainMode,
    pub negative_latents: NegativeLatents,
    pub c: f64,
    pub positives: Vec<Item>,
    pub negatives: Vec<Item>,
    pub queries: Vec<QueryBlock>,
}

/// Affine piece `b + a·λ`.
#[derive(Debug, Clone, Copy)]
pub struct Piece {
    pub a: FeatureVector,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct Group {
    pub weight: f64,
    pub pieces: Vec<Piece>,
}

impl Group {
    pub fn loss(&self, lambda: &[f64]) -> f64 {
        let worst = self
            .pieces
            .iter()
            .map(|p| p.b + dot(lambda, &p.a))
            .fold(0.0, f64::max);
        self.weight * worst
    }
}

/// `Σ_k u_k φ_k`.
pub fn mean_features(u: &[f64], features: &[FeatureVector]) -> FeatureVector {
    let mut m = [0.0; NUM_FEATURES];
    for (w, f) in u.iter().zip(features) {
        for k in 0..NUM_FEATURES {
            m[k] += w * f[k];
        }
    }
    m
}

/// Itemwise negatives must score at most this, up to slack.
pub const NEGATIVE_BOUND: f64 = -1.0;

fn neg(v: &FeatureVector) -> FeatureVector {
    v.map(|x| -x)
}

fn sub(a: &FeatureVector, b: &FeatureVector) -> FeatureVector {
    let mut out = *a;
    for k in 0..NUM_FEATURES {
        out[k] -= b[k];
    }
    out
}

impl ConstraintSystem {
    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    /// u-weighted constraints, one per positive item (itemwise only).
    pub fn num_disjunctive(&self) -> usize {
        match self.mode {
            TrainMode::Itemwise => self.positives.len(),
            TrainMode::Pairwise => 0,
        }
    }

    /// Plain linear constraints.
    pub fn num_linear(&self) -> usize {
        match self.mode {
            TrainMode::Itemwise => self.negatives.iter().map(|n| n.latents.len()).sum(),
            TrainMode::Pairwise if self.weighted_negatives() => {
                self.queries.iter().map(|b| b.positives.len() * b.negatives.len()).sum()
            }
            TrainMode::Pairwise => self
                .queries
                .iter()
                .map(|b| {
                    b.positives.len()
                        * b.negatives
                            .iter()
                            .map(|&n| self.negatives[n].latents.len())
                            .sum::<usize>()
                })
                .sum(),
        }
    }

    fn weighted_negatives(&self) -> bool {
        self.mode == TrainMode::Pairwise && self.negative_latents == NegativeLatents::Weighted
    }

    /// Items that carry a latent distribution: positives, then negatives
    /// when they are weighted.
    pub fn weighted_items(&self) -> impl Iterator<Item = &Item> {
        let negs = if self.weighted_negatives() {
            &self.negatives[..]
        } else {
            &self.negatives[..0]
        };
        self.positives.iter().chain(negs)
    }

    /// Slack groups for a fixed `u`, one distribution per weighted item.
    pub fn groups(&self, u: &[Vec<f64>]) -> Vec<Group> {
        let per_query = self.c / self.queries.len() as f64;
        let means: Vec<FeatureVector> = self
            .weighted_items()
            .zip(u)
            .map(|(p, u)| mean_features(u, &p.features))
            .collect();
        let neg_mean = |n: usize| &means[self.positives.len() + n];
        let mut groups = Vec::new();
        for block in &self.queries {
            match self.mode {
                TrainMode::Itemwise => {
                    let w = per_query / (block.positives.len() + block.negatives.len()) as f64;
                    for &p in &block.positives {
                        groups.push(Group {
                            weight: w,
                            pieces: vec![Piece {
                                a: neg(&means[p]),
                                b: 1.0,
                            }],
                        });
                    }
                    for &n in &block.negatives {
                        groups.push(Group {
                            weight: w,
                            pieces: self.negatives[n]
                                .features
                                .iter()
                                .map(|f| Piece { a: *f, b: -NEGATIVE_BOUND })
                                .collect(),
                        });
                    }
                }
                TrainMode::Pairwise => {
                    let w = per_query / (block.positives.len() * block.negatives.len()) as f64;
                    for &p in &block.positives {
                        for &n in &block.negatives {
                            let pieces = if self.weighted_negatives() {
                                vec![Piece {
                                    a: sub(neg_mean(n), &means[p]),
                                    b: 1.0,
                                }]
                            } else {
                                self.negatives[n]
                                    .features
                                    .iter()
                                    .map(|f| Piece {
                                        a: sub(f, &means[p]),
                                        b: 1.0,
                                    })
                                    .collect()
                            };
                            groups.push(Group { weight: w, pieces });
                        }
                    }
                }
            }
        }
        groups
    }

    /// `(objective, weighted slack sum)` of the u-fixed problem at `λ`.
    pub fn objective(&self, lambda: &[f64], u: &[Vec<f64>]) -> (f64, f64) {
        let hinge: f64 = self.groups(u).iter().map(|g| g.loss(lambda)).sum();
        let reg = 0.5 * lambda.iter().map(|x| x * x).sum::<f64>();
        (reg + hinge, hinge)
    }
}

fn item(fq: &FeatureQuery, query: usize, e: EntityId) -> Result<Item> {
    let ef = fq.entity(e)?;
    let mut features = Vec::new();
    let mut latents = Vec::new();
    for l in fq.latents(&ef) {
        features.push(fq.features(&ef, l));
        latents.push((fq.type_of(&ef, l), fq.switch_of(l)));
    }
    Ok(Item {
        query,
        entity: e,
        features,
        latents,
    })
}

/// Builds the constraint system; queries without positives or negatives
/// are skipped. Negatives are sampled down to `hp.neg_cap` per query.
pub fn build_constraints(
    set: &[TrainingQuery],
    catalog: &Catalog,
    index: &SnippetIndex,
    priors: &TypePriorTable,
    hp: &DiscHyperParams,
) -> Result<ConstraintSystem> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut kept: Vec<(&TrainingQuery, Vec<EntityId>)> = Vec::new();
    for tq in set {
        if tq.positives.is_empty() || tq.negatives.is_empty() {
            log::warn!(
                "skipping training query `{}`: {} positives, {} negatives",
                tq.query.qid,
                tq.positives.len(),
                tq.negatives.len()
            );
            continue;
        }
        let negs = if tq.negatives.len() > hp.neg_cap {
            let mut idx = rand::seq::index::sample(&mut rng, tq.negatives.len(), hp.neg_cap).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| tq.negatives[i]).collect()
        } else {
            tq.negatives.clone()
        };
        kept.push((tq, negs));
    }
    if kept.is_empty() {
        return Err(Error::NoTrainingData);
    }

    let per_query: Vec<(Vec<Item>, Vec<Item>)> = kept
        .par_iter()
        .enumerate()
        .map(|(qi, (tq, negs))| {
            let fq = FeatureQuery::new(&tq.query, catalog, index, priors, hp.beta, hp.partition_mode);
            let pos = tq.positives.iter().map(|&e| item(&fq, qi, e)).collect::<Result<Vec<_>>>()?;
            let neg = negs.iter().map(|&e| item(&fq, qi, e)).collect::<Result<Vec<_>>>()?;
            Ok((pos, neg))
        })
        .collect::<Result<_>>()?;

    let mut sys = ConstraintSystem {
        mode: hp.mode,
        negative_latents: hp.negative_latents,
        c: hp.c,
        positives: Vec::new(),
        negatives: Vec::new(),
        queries: Vec::new(),
    };
    for (pos, neg) in per_query {
        let block = QueryBlock {
            positives: (sys.positives.len()..sys.positives.len() + pos.len()).collect(),
            negatives: (sys.negatives.len()..sys.negatives.len() + neg.len()).collect(),
        };
        sys.positives.extend(pos);
        sys.negatives.extend(neg);
        sys.queries.push(block);
    }
    Ok(sys)
}
