//! Alternating training: λ-step with u fixed, decay D, u-step with λ fixed.

use std::fmt::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use sha2::{Digest, Sha256};

use crate::catalog::{Catalog, TypePriorTable};
use crate::error::Result;
use crate::index::SnippetIndex;
use crate::query::Query;

use super::constraints::{build_constraints, ConstraintSystem};
pub use super::constraints::TrainingQuery;
use super::features::{dot, LAYOUT_VERSION};
use super::solver::{lambda_step, primal, SolverOptions};
use super::{DiscHyperParams, Model, TrainMode};

const CONVERGED: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    /// Temperature in force during this λ-step.
    pub d: f64,
    /// Objective after the λ-step, under the u it was solved with.
    pub objective: f64,
    /// Objective of the previous λ under the same u.
    pub objective_before: f64,
    pub hinge: f64,
    /// `Σ_{q,e+} H(u)` of the u used in this λ-step.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("iter\tD\tobjective\thinge_loss\tentropy\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.iter, r.d, r.objective, r.hinge, r.entropy);
        }
        s
    }
}

/// Maximizer of `Σ u s + D H(u)` on the simplex: softmax of `s / D`, or
/// the first argmax when `D = 0`.
pub fn u_step(scores: &[f64], d: f64) -> Vec<f64> {
    let mut u = vec![0.0; scores.len()];
    if scores.is_empty() {
        return u;
    }
    if d <= 0.0 {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        u[best] = 1.0;
        return u;
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (ui, &s) in u.iter_mut().zip(scores) {
        *ui = ((s - m) / d).exp();
        z += *ui;
    }
    for ui in &mut u {
        *ui /= z;
    }
    u
}

pub fn entropy(u: &[f64]) -> f64 {
    -u.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Uniform-Dirichlet sample of dimension `n`.
fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    v
}

/// Training hinge of the disjunctive problem at `λ`: positives use their
/// best latent, negatives their worst.
pub fn max_hinge(sys: &ConstraintSystem, lambda: &[f64]) -> f64 {
    let best = |f: &[super::FeatureVector]| f.iter().map(|x| dot(lambda, x)).fold(f64::NEG_INFINITY, f64::max);
    let per_query = sys.c / sys.queries.len() as f64;
    let mut total = 0.0;
    for b in &sys.queries {
        match sys.mode {
            TrainMode::Itemwise => {
                let w = per_query / (b.positives.len() + b.negatives.len()) as f64;
                for &p in &b.positives {
                    total += w * (1.0 - best(&sys.positives[p].features)).max(0.0);
                }
                for &n in &b.negatives {
                    total += w * (best(&sys.negatives[n].features) - super::constraints::NEGATIVE_BOUND).max(0.0);
                }
            }
            TrainMode::Pairwise => {
                let w = per_query / (b.positives.len() * b.negatives.len()) as f64;
                for &p in &b.positives {
                    let sp = best(&sys.positives[p].features);
                    for &n in &b.negatives {
                        total += w * (1.0 - sp + best(&sys.negatives[n].features)).max(0.0);
                    }
                }
            }
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct SystemFit {
    pub lambda: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub log: TrainLog,
}

/// Runs the alternation on a prebuilt constraint system.
pub fn train_system(sys: &ConstraintSystem, hp: &DiscHyperParams, opts: SolverOptions) -> Result<SystemFit> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(1);
    let mut u: Vec<Vec<f64>> = sys
        .weighted_items()
        .map(|p| random_simplex(&mut rng, p.features.len()))
        .collect();
    let mut d = hp.schedule.d0;
    let mut lambda = vec![0.0; super::NUM_FEATURES];
    
    let mut log = TrainLog::default();

    for iter in 1..=hp.schedule.outer_iters {
        let groups = sys.groups(&u);
        let (before, _) = primal(&groups, &lambda);
        let sol = lambda_step(&groups, Some(&lambda), opts)?;
        log.rows.push(LogRow {
            iter,
            d,
            objective: sol.objective,
            objective_before: before,
            hinge: sol.hinge,
            entropy: u.iter().map(|x| entropy(x)).sum(),
        });
        let dl = sol
            .lambda
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        lambda = sol.lambda;

        d *= hp.schedule.decay;
        let new_u: Vec<Vec<f64>> = sys
            .weighted_items()
            .map(|p| {
                let scores: Vec<f64> = p.features.iter().map(|f| dot(&lambda, f)).collect();
                u_step(&scores, d)
            })
            .collect();
        let du = new_u
            .iter()
            .zip(&u)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        u = new_u;
        if dl < CONVERGED && du < CONVERGED {
            break;
        }
    }
    Ok(SystemFit { lambda, u, log })
}

/// sha256 over the training queries and their judgments.
pub fn fingerprint(set: &[TrainingQuery], catalog: &Catalog) -> String {
    let mut h = Sha256::new();
    for tq in set {
        h.update(tq.query.qid.as_bytes());
        h.update([0]);
        h.update(tq.query.words.join(" ").as_bytes());
        h.update([0]);
        for e in &tq.positives {
            h.update(catalog.entity_name(*e).as_bytes());
            h.update([1]);
        }
        h.update([0]);
        for e in &tq.negatives {
            h.update(catalog.entity_name(*e).as_bytes());
            h.update([2]);
        }
        h.update([0xff]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Trains on judged queries; the type prior counts their gold types.
pub fn train(
    queries: &[Query],
    catalog: &Catalog,
    index: &SnippetIndex,
    hp: &DiscHyperParams,
    opts: SolverOptions,
) -> Result<(Model, TrainLog)> {
    hp.validate()?;
    let gold = queries
        .iter()
        .filter_map(|q| q.judgments.as_ref().and_then(|j| j.gold_type));
    let priors = TypePriorTable::from_gold_types(catalog, gold, hp.gamma)?;
    let set: Vec<TrainingQuery> = queries.iter().filter_map(TrainingQuery::from_judged).collect();
    let sys = build_constraints(&set, catalog, index, &priors, hp)?;
    let fit = train_system(&sys, hp, opts)?;
    let model = Model {
        layout_version: LAYOUT_VERSION,
        lambda: fit.lambda,
        hp: hp.clone(),
        priors,
        fingerprint: fingerprint(&set, catalog),
    };
    Ok((model, fit.log))
}
