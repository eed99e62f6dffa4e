//! Discriminative latent-variable ranker: score(q, e) = max_{t,z} λ·φ(q,e,t,z),
//! trained max-margin with an entropy-annealed alternation over λ and the
//! latent assignment u.

pub mod constraints;
pub mod features;
pub mod model_file;
pub mod solver;
pub mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, EntityId, TypeId, TypePriorTable};
use crate::error::{Error, Result};
use crate::index::SnippetIndex;
use crate::query::{PartitionMode, Query, SwitchVector};

pub use constraints::{build_constraints, ConstraintSystem, Group, Item, Piece};
pub use features::{
    dot, EntityFeatures, FeatureQuery, FeatureVector, Latent, FEATURE_NAMES, LAYOUT_VERSION,
    NUM_FEATURES,
};
pub use model_file::{read_model, write_model};
pub use solver::{lambda_step, LambdaSolution, SolverOptions};
pub use train::{train, u_step, LogRow, TrainLog, TrainingQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Itemwise,
    Pairwise,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "itemwise" => Ok(TrainMode::Itemwise),
            "pairwise" => Ok(TrainMode::Pairwise),
            other => Err(Error::Config(format!("unknown training mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Itemwise => "itemwise",
            TrainMode::Pairwise => "pairwise",
        })
    }
}

/// How a pairwise negative enters its pair constraints: through every
/// latent (`max`) or through its own annealed latent weights (`weighted`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NegativeLatents {
    #[default]
    Max,
    Weighted,
}

impl std::str::FromStr for NegativeLatents {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(NegativeLatents::Max),
            "weighted" => Ok(NegativeLatents::Weighted),
            other => Err(Error::Config(format!("unknown negative latent handling `{other}`"))),
        }
    }
}

impl std::fmt::Display for NegativeLatents {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NegativeLatents::Max => "max",
            NegativeLatents::Weighted => "weighted",
        })
    }
}

/// Temperature schedule: `D_0`, multiplied by `decay` after every λ-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub d0: f64,
    pub decay: f64,
    pub outer_iters: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            d0: 1.0,
            decay: 0.1,
            outer_iters: 6,
        }
    }
}

impl Schedule {
    /// Temperature held at zero throughout (no annealing).
    pub fn collapse(outer_iters: usize) -> Self {
        Schedule {
            d0: 0.0,
            decay: 0.5,
            outer_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 >= 0.0 && self.d0.is_finite()) {
            return Err(Error::HyperParam(format!("D_0 must be finite and >= 0, got {}", self.d0)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::HyperParam(format!("decay must lie in (0,1), got {}", self.decay)));
        }
        if self.outer_iters == 0 {
            return Err(Error::HyperParam("outer_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscHyperParams {
    /// SVM trade-off `C`.
    pub c: f64,
    pub mode: TrainMode,
    /// Pairwise only.
    pub negative_latents: NegativeLatents,
    pub schedule: Schedule,
    /// Negatives kept per query.
    pub neg_cap: usize,
    /// Type-LM smoothing used by the hint feature.
    pub beta: f64,
    /// Type-prior smoothing used by the prior feature.
    pub gamma: f64,
    pub partition_mode: PartitionMode,
    pub seed: u64,
}

impl Default for DiscHyperParams {
    fn default() -> Self {
        DiscHyperParams {
            c: 10.0,
            mode: TrainMode::Itemwise,
            negative_latents: NegativeLatents::Max,
            schedule: Schedule::default(),
            neg_cap: 50,
            beta: 0.1,
            gamma: 0.1,
            partition_mode: PartitionMode::Exhaustive,
            seed: 0,
        }
    }
}

impl DiscHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::HyperParam(format!("C must be positive, got {}", self.c)));
        }
        if self.neg_cap == 0 {
            return Err(Error::HyperParam("neg_cap must be >= 1".into()));
        }
        crate::generative::check_unit("beta", self.beta)?;
        crate::generative::check_unit("gamma", self.gamma)?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layout_version: u32,
    pub lambda: Vec<f64>,
    pub hp: DiscHyperParams,
    /// Gold-type hit counts from the training queries.
    pub priors: TypePriorTable,
    /// sha256 over the training queries and judgments.
    pub fingerprint: String,
}

impl Model {
    /// An untrained model with the given weights.
    pub fn with_lambda(lambda: Vec<f64>, hp: DiscHyperParams, priors: TypePriorTable) -> Self {
        Model {
            layout_version: LAYOUT_VERSION,
            lambda,
            hp,
            priors,
            fingerprint: String::new(),
        }
    }

    pub fn check_layout(&self) -> Result<()> {
        if self.layout_version != LAYOUT_VERSION || self.lambda.len() != NUM_FEATURES {
            return Err(Error::LayoutMismatch {
                found: self.layout_version,
                expected: LAYOUT_VERSION,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference {
    pub entity: EntityId,
    pub score: f64,
    pub best_t: TypeId,
    pub best_z: SwitchVector,
}

pub struct DiscriminativeRanker<'a> {
    pub catalog: &'a Catalog,
    pub index: &'a SnippetIndex,
    pub model: &'a Model,
}

impl<'a> DiscriminativeRanker<'a> {
    pub fn new(catalog: &'a Catalog, index: &'a SnippetIndex, model: &'a Model) -> Result<Self> {
        model.check_layout()?;
        Ok(DiscriminativeRanker {
            catalog,
            index,
            model,
        })
    }

    pub fn prepare(&self, q: &Query) -> FeatureQuery<'a> {
        FeatureQuery::new(
            q,
            self.catalog,
            self.index,
            &self.model.priors,
            self.model.hp.beta,
            self.model.hp.partition_mode,
        )
    }

    pub fn infer(&self, q: &Query, e: EntityId) -> Result<Inference> {
        infer_prepared(&self.prepare(q), &self.model.lambda, e)
    }

    pub fn rank(&self, q: &Query, candidates: &[EntityId]) -> Result<Vec<Inference>> {
        rank_prepared(&self.prepare(q), &self.model.lambda, candidates)
    }

    /// `score(t|e) = max_z λ·φ(q,e,t,z)` for every type of `e`.
    pub fn type_scores(&self, q: &Query, e: EntityId) -> Result<Vec<(TypeId, f64)>> {
        type_scores_prepared(&self.prepare(q), &self.model.lambda, e)
    }
}

/// Max over admissible `(t, z)`; the first maximum in enumeration order wins.
pub fn infer_prepared(fq: &FeatureQuery, lambda: &[f64], e: EntityId) -> Result<Inference> {
    let ef = fq.entity(e)?;
    let mut best: Option<(f64, Latent)> = None;
    for l in fq.latents(&ef) {
        let s = dot(lambda, &fq.features(&ef, l));
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, l));
        }
    }
    let (score, l) = best.ok_or_else(|| Error::Unscorable(fq.catalog.entity_name(e).to_owned()))?;
    Ok(Inference {
        entity: e,
        score,
        best_t: fq.type_of(&ef, l),
        best_z: fq.switch_of(l),
    })
}

/// Descending score; ties by external entity id.
pub fn rank_prepared(fq: &FeatureQuery, lambda: &[f64], candidates: &[EntityId]) -> Result<Vec<Inference>> {
    let mut out = candidates
        .par_iter()
        .map(|&e| infer_prepared(fq, lambda, e))
        .collect::<Result<Vec<_>>>()?;
    let c = fq.catalog;
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| c.entity_name(a.entity).cmp(c.entity_name(b.entity)))
    });
    Ok(out)
}

pub fn type_scores_prepared(fq: &FeatureQuery, lambda: &[f64], e: EntityId) -> Result<Vec<(TypeId, f64)>> {
    let ef = fq.entity(e)?;
    let mut scores: Vec<(TypeId, f64)> = ef.types.iter().map(|&t| (t, f64::NEG_INFINITY)).collect();
    for l in fq.latents(&ef) {
        let s = dot(lambda, &fq.features(&ef, l));
        let slot = &mut scores[l.type_idx].1;
        if s > *slot {
            *slot = s;
        }
    }
    Ok(scores)
}
