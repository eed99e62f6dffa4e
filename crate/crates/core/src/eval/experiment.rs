//! Cross-validated comparison of rankers over a judged query set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, query_metrics, Aggregate, QueryMetrics};
use super::runs::{Engine, RankerKind, Run};
use super::tuning::{fold_split, select_c, select_gen};
use crate::catalog::{Catalog, TypePriorTable};
use crate::discriminative::{train, DiscHyperParams, DiscriminativeRanker, Model, SolverOptions};
use crate::error::Result;
use crate::generative::{EntityPrior, GenHyperParams, GenerativeRanker};
use crate::query::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// WAND threshold θ.
    pub theta: f64,
    pub gen: GenHyperParams,
    pub entity_prior: EntityPrior,
    pub disc: DiscHyperParams,
    pub folds: usize,
    pub fold_seed: u64,
    /// Candidate `C` values, chosen by inner cross-validation on the
    /// training folds. Empty keeps `disc.c`.
    pub c_grid: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            theta: 0.05,
            gen: GenHyperParams::default(),
            entity_prior: EntityPrior::Mentions,
            disc: DiscHyperParams::default(),
            folds: 5,
            fold_seed: 0,
            c_grid: Vec::new(),
            inner_folds: 3,
        }
    }
}

/// Per-ranker runs in query order plus the exclusion list.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub qids: Vec<String>,
    pub runs: BTreeMap<RankerKind, Vec<Run>>,
    /// Queries with no relevant entity reachable through the root pool.
    pub excluded: BTreeSet<String>,
    /// Fold-wise chosen `C`, empty unless a grid was searched.
    pub chosen_c: Vec<f64>,
}

impl Evaluation {
    /// Per-query metrics for included queries, keyed by qid.
    pub fn metrics(&self, kind: RankerKind, queries: &[Query]) -> BTreeMap<String, QueryMetrics> {
        let Some(runs) = self.runs.get(&kind) else {
            return BTreeMap::new();
        };
        runs.iter()
            .zip(queries)
            .filter(|(r, _)| !self.excluded.contains(&r.qid))
            .filter_map(|(r, q)| Some((r.qid.clone(), query_metrics(&r.entities(), &q.relevant())?)))
            .collect()
    }

    pub fn aggregate(&self, kind: RankerKind, queries: &[Query]) -> Aggregate {
        aggregate(self.metrics(kind, queries).values())
    }
}

/// Queries whose relevant set is empty or misses the root candidate pool.
pub fn excluded_queries(engine: &Engine, queries: &[Query]) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for q in queries {
        let pool = engine.candidate_pool(q, engine.catalog.root())?;
        let rel = &q.relevant();
        if rel.is_empty() || !pool.iter().any(|e| rel.contains(e)) {
            out.insert(q.qid.clone());
        }
    }
    Ok(out)
}

fn gold_priors(catalog: &Catalog, queries: &[&Query], gamma: f64) -> Result<TypePriorTable> {
    TypePriorTable::from_gold_types(catalog, queries.iter().filter_map(|q| q.gold_type()), gamma)
}

/// Runs every requested ranker on `test`, given trained state.
fn run_all(
    engine: &Engine,
    test: &[&Query],
    rankers: &[RankerKind],
    gen: &GenerativeRanker,
    disc: Option<&DiscriminativeRanker>,
    out: &mut BTreeMap<RankerKind, Vec<(usize, Run)>>,
    positions: &[usize],
) -> Result<()> {
    for (&pos, q) in positions.iter().zip(test) {
        for &kind in rankers {
            let run = match kind {
                RankerKind::Generic => engine.run_generic(q, gen)?,
                RankerKind::Generative => engine.run_generative(q, gen)?,
                RankerKind::Perfect => match q.gold_type() {
                    Some(t) => engine.run_perfect(q, t, gen)?,
                    None => Run {
                        qid: q.qid.clone(),
                        entries: Vec::new(),
                    },
                },
                RankerKind::Discriminative => engine.run_discriminative(q, disc.expect("model trained"))?,
                RankerKind::TwoStage { k } => engine.run_two_stage(q, disc.expect("model trained"), k, gen)?,
            };
            out.entry(kind).or_default().push((pos, run));
        }
    }
    Ok(())
}

fn mean_ap(engine: &Engine, disc: &DiscriminativeRanker, queries: &[&Query]) -> Result<f64> {
    let mut per = Vec::new();
    for q in queries {
        let run = engine.run_discriminative(q, disc)?;
        if let Some(m) = query_metrics(&run.entities(), &q.relevant()) {
            per.push(m);
        }
    }
    Ok(aggregate(per.iter()).map)
}

/// Picks `C` from the grid by inner cross-validated MAP.
fn tune_c(engine: &Engine, train_q: &[&Query], cfg: &ExperimentConfig, opts: SolverOptions) -> Result<f64> {
    let qids: Vec<&str> = train_q.iter().map(|q| q.qid.as_str()).collect();
    let inner = fold_split(&qids, cfg.inner_folds.min(qids.len()).max(2), cfg.fold_seed.wrapping_add(1))?;
    let mut scored = Vec::new();
    for &c in &cfg.c_grid {
        let hp = DiscHyperParams { c, ..cfg.disc.clone() };
        let mut total = 0.0;
        for (i, held) in inner.iter().enumerate() {
            let fit: Vec<Query> = inner
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().map(|&p| train_q[p].clone()))
                .collect();
            let (model, _) = train(&fit, engine.catalog, engine.index, &hp, opts)?;
            let ranker = DiscriminativeRanker::new(engine.catalog, engine.index, &model)?;
            let val: Vec<&Query> = held.iter().map(|&p| train_q[p]).collect();
            total += mean_ap(engine, &ranker, &val)?;
        }
        scored.push((c, total / inner.len() as f64));
    }
    Ok(select_c(&scored).unwrap_or(cfg.disc.c))
}

/// K-fold evaluation: for each fold, priors and the model come from the
/// remaining folds only.
pub fn cross_validate(
    engine: &Engine,
    queries: &[Query],
    rankers: &[RankerKind],
    cfg: &ExperimentConfig,
    opts: SolverOptions,
) -> Result<Evaluation> {
    let qids: Vec<&str> = queries.iter().map(|q| q.qid.as_str()).collect();
    let folds = fold_split(&qids, cfg.folds, cfg.fold_seed)?;
    let needs_model = rankers.iter().any(RankerKind::needs_model);
    let mut collected: BTreeMap<RankerKind, Vec<(usize, Run)>> = BTreeMap::new();
    let mut chosen_c = Vec::new();
    for (i, test_pos) in folds.iter().enumerate() {
        let train_q: Vec<&Query> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().map(|&p| &queries[p]))
            .collect();
        let test_q: Vec<&Query> = test_pos.iter().map(|&p| &queries[p]).collect();
        let priors = gold_priors(engine.catalog, &train_q, cfg.gen.gamma)?;
        let gen = GenerativeRanker::new(engine.catalog, engine.index, &priors, cfg.gen, cfg.disc.partition_mode)?
            .with_entity_prior(cfg.entity_prior);
        let model = if needs_model {
            let c = if cfg.c_grid.is_empty() {
                cfg.disc.c
            } else {
                let c = tune_c(engine, &train_q, cfg, opts)?;
                chosen_c.push(c);
                c
            };
            let hp = DiscHyperParams { c, ..cfg.disc.clone() };
            let owned: Vec<Query> = train_q.iter().map(|&q| q.clone()).collect();
            Some(train(&owned, engine.catalog, engine.index, &hp, opts)?.0)
        } else {
            None
        };
        let disc = model
            .as_ref()
            .map(|m| DiscriminativeRanker::new(engine.catalog, engine.index, m))
            .transpose()?;
        run_all(engine, &test_q, rankers, &gen, disc.as_ref(), &mut collected, test_pos)?;
    }
    Ok(finish(engine, queries, collected, chosen_c)?)
}

/// Evaluation with a fixed model; generative priors reuse the model's
/// training counts.
pub fn evaluate_fixed(
    engine: &Engine,
    queries: &[Query],
    rankers: &[RankerKind],
    cfg: &ExperimentConfig,
    model: &Model,
) -> Result<Evaluation> {
    let priors = model.priors.with_gamma(cfg.gen.gamma)?;
    let gen = GenerativeRanker::new(engine.catalog, engine.index, &priors, cfg.gen, model.hp.partition_mode)?
        .with_entity_prior(cfg.entity_prior);
    let disc = DiscriminativeRanker::new(engine.catalog, engine.index, model)?;
    let all: Vec<&Query> = queries.iter().collect();
    let positions: Vec<usize> = (0..queries.len()).collect();
    let mut collected = BTreeMap::new();
    run_all(engine, &all, rankers, &gen, Some(&disc), &mut collected, &positions)?;
    finish(engine, queries, collected, Vec::new())
}

/// Every `(α, β, γ, δ)` drawn from `values`.
pub fn generative_grid(values: &[f64]) -> Vec<GenHyperParams> {
    let mut out = Vec::new();
    for &alpha in values {
        for &beta in values {
            for &gamma in values {
                for &delta in values {
                    out.push(GenHyperParams { alpha, beta, gamma, delta });
                }
            }
        }
    }
    out
}

/// Cross-validated MAP of the generative ranker for each grid point, and
/// the chosen tuple. Priors come from the training folds.
pub fn sweep_generative(
    engine: &Engine,
    queries: &[Query],
    grid: &[GenHyperParams],
    cfg: &ExperimentConfig,
) -> Result<(GenHyperParams, Vec<(GenHyperParams, f64)>)> {
    let qids: Vec<&str> = queries.iter().map(|q| q.qid.as_str()).collect();
    let folds = fold_split(&qids, cfg.folds, cfg.fold_seed)?;
    let excluded = excluded_queries(engine, queries)?;
    let mut scored = Vec::with_capacity(grid.len());
    for &hp in grid {
        hp.validate()?;
        let mut per = Vec::new();
        for (i, test_pos) in folds.iter().enumerate() {
            let train_q: Vec<&Query> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().map(|&p| &queries[p]))
                .collect();
            let priors = gold_priors(engine.catalog, &train_q, hp.gamma)?;
            let gen = GenerativeRanker::new(engine.catalog, engine.index, &priors, hp, cfg.disc.partition_mode)?
                .with_entity_prior(cfg.entity_prior);
            for &p in test_pos {
                let q = &queries[p];
                if excluded.contains(&q.qid) {
                    continue;
                }
                let run = engine.run_generative(q, &gen)?;
                if let Some(m) = query_metrics(&run.entities(), q.relevant()) {
                    per.push(m);
                }
            }
        }
        scored.push((hp, aggregate(per.iter()).map));
    }
    let best = select_gen(&scored).unwrap_or(cfg.gen);
    Ok((best, scored))
}

fn finish(
    engine: &Engine,
    queries: &[Query],
    collected: BTreeMap<RankerKind, Vec<(usize, Run)>>,
    chosen_c: Vec<f64>,
) -> Result<Evaluation> {
    let runs = collected
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by_key(|x| x.0);
            (k, v.into_iter().map(|x| x.1).collect())
        })
        .collect();
    Ok(Evaluation {
        qids: queries.iter().map(|q| q.qid.clone()).collect(),
        runs,
        excluded: excluded_queries(engine, queries)?,
        chosen_c,
    })
}
