//! Library-vs-reference comparisons. Each returns the first mismatch.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ter_core::catalog::{CatalogBuilder, EntityId, TypePriorTable};
use ter_core::discriminative::{u_step, DiscHyperParams, DiscriminativeRanker, Model};
use ter_core::eval::metrics::{average_precision, ndcg_at, reciprocal_rank};
use ter_core::generative::{GenHyperParams, GenerativeRanker};
use ter_core::index::{QueryTerm, RawDocument, SnippetIndex, WandQuery};
use ter_core::query::{Judgments, PartitionMode, Query};
use ter_core::typepred::{bn_type_scores, Descriptions};

use super::fixture::{Fixture, CORPUS, NAMES, SMALL, UNSEEN, VOCAB};
use super::oracle::{entropy_objective, metrics, naive_retrieve, simplex_maximize, FeatureReference, GenParams, Reference};

pub type Check = Result<(), String>;

const QUERIES_PER_FIXTURE: usize = 3;

/// `score_entity` against full enumeration in linear space.
pub fn generative(seed: u64) -> Check {
    let fx = Fixture::random(seed, SMALL);
    let r = Reference::new(&fx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let p = GenParams {
        alpha: rng.random_range(0.01..0.99),
        beta: rng.random_range(0.01..0.99),
        gamma: fx.gamma,
        delta: rng.random_range(0.01..0.99),
    };
    let priors = fx.priors();
    let hp = GenHyperParams {
        alpha: p.alpha,
        beta: p.beta,
        gamma: p.gamma,
        delta: p.delta,
    };
    let ranker = GenerativeRanker::new(&fx.catalog, &fx.index, &priors, hp, PartitionMode::Exhaustive)
        .map_err(|e| e.to_string())?;
    for _ in 0..QUERIES_PER_FIXTURE {
        let q = fx.random_query(&mut rng, SMALL.max_query);
        for e in 0..fx.entities.len() {
            let want = r.generative_mass(&q.words, e, p);
            let got = ranker
                .score_entity(&q, r.entity_id(e), false)
                .map_err(|e| e.to_string())?
                .log_mass;
            let ok = if want == 0.0 {
                got == f64::NEG_INFINITY
            } else {
                (got.exp() - want).abs() <= 1e-12 * want
            };
            if !ok {
                return Err(format!(
                    "seed {seed} query {:?} entity {}: library {} vs reference {}",
                    q.words,
                    fx.entities[e].0,
                    got.exp(),
                    want
                ));
            }
        }
    }
    Ok(())
}

/// `infer` against exhaustive `(t, z)` enumeration: exact score and argmax.
pub fn discriminative(seed: u64) -> Check {
    let fx = Fixture::random(seed, SMALL);
    let r = Reference::new(&fx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let beta = rng.random_range(0.01..0.99);
    let hp = DiscHyperParams {
        beta,
        gamma: fx.gamma,
        ..DiscHyperParams::default()
    };
    for _ in 0..QUERIES_PER_FIXTURE {
        // Small integer weights make ties common, exercising the tie-break.
        let lambda: Vec<f64> = if rng.random_bool(0.5) {
            (0..12).map(|_| rng.random_range(-3..=3) as f64).collect()
        } else {
            (0..12).map(|_| rng.random_range(-2.0..2.0)).collect()
        };
        let model = Model::with_lambda(lambda.clone(), hp.clone(), fx.priors());
        let ranker = DiscriminativeRanker::new(&fx.catalog, &fx.index, &model).map_err(|e| e.to_string())?;
        let q = fx.random_query(&mut rng, SMALL.max_query);
        let fr = FeatureReference::new(&r, &q.words, beta, fx.gamma);
        for e in 0..fx.entities.len() {
            let (score, t, z) = fr.infer(e, &lambda);
            let got = ranker.infer(&q, r.entity_id(e)).map_err(|e| e.to_string())?;
            if got.score.to_bits() != score.to_bits() || got.best_t != r.type_id(t) || got.best_z.mask() as u32 != z {
                return Err(format!(
                    "seed {seed} query {:?} entity {}: library ({}, {}, {}) vs reference ({}, {}, {:b})",
                    q.words,
                    fx.entities[e].0,
                    got.score,
                    fx.catalog.type_name(got.best_t),
                    got.best_z,
                    score,
                    fx.types[t].name,
                    z
                ));
            }
        }
    }
    Ok(())
}

/// Largest gap between the softmax u-step and a numerical maximizer.
pub fn u_step_deviation(seed: u64, d: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=8);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let closed = u_step(&scores, d);
    let numeric = simplex_maximize(&scores, d);
    let dev = closed
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let gain = entropy_objective(&numeric, &scores, d) - entropy_objective(&closed, &scores, d);
    (dev, gain)
}

fn random_term(rng: &mut ChaCha8Rng, fx: &Fixture) -> QueryTerm {
    let mut pool: Vec<&str> = VOCAB.to_vec();
    pool.extend(NAMES.iter().take(fx.entities.len()));
    pool.push(UNSEEN);
    let phrase = rng.random_bool(0.3);
    let mut word = || pool[rng.random_range(0..pool.len())].to_owned();
    if phrase {
        QueryTerm::Phrase(vec![word(), word()])
    } else {
        QueryTerm::Word(word())
    }
}

/// WAND retrieval against a scan of every in-type mention window.
pub fn retrieval(seed: u64, theta: f64) -> Check {
    let fx = Fixture::random(seed, CORPUS);
    let r = Reference::new(&fx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a4d);
    for _ in 0..QUERIES_PER_FIXTURE {
        let target = rng.random_range(0..fx.types.len());
        let terms: Vec<QueryTerm> = (0..rng.random_range(1..=3)).map(|_| random_term(&mut rng, &fx)).collect();
        let plain: Vec<Vec<String>> = terms
            .iter()
            .map(|t| match t {
                QueryTerm::Word(w) => vec![w.clone()],
                QueryTerm::Phrase(ws) => ws.clone(),
            })
            .collect();
        let want = naive_retrieve(&r, target, &plain, theta);
        let q = WandQuery::new(r.type_id(target), terms, theta, fx.window);
        let got: BTreeSet<(usize, usize, usize, usize)> = fx
            .index
            .retrieve(&fx.catalog, &q)
            .map_err(|e| e.to_string())?
            .map(|s| {
                let name = fx.catalog.entity_name(s.entity);
                let e = fx.entities.iter().position(|(n, _)| n == name).unwrap();
                (e, s.doc.0 as usize, s.span.0 as usize, s.span.1 as usize)
            })
            .collect();
        if got != want {
            return Err(format!(
                "seed {seed} theta {theta} type {} terms {plain:?}: {} retrieved vs {} expected",
                fx.types[target].name,
                got.len(),
                want.len()
            ));
        }
    }
    Ok(())
}

/// AP, RR and NDCG@{1,5,10} on one random ranking, compared bitwise.
pub fn metric_case(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=30u32);
    let mut ids: Vec<u32> = (0..n).collect();
    ids.shuffle(&mut rng);
    ids.truncate(rng.random_range(0..=n as usize));
    let mut rel: BTreeSet<u32> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
    if rel.is_empty() {
        rel.insert(rng.random_range(0..n));
    }
    let pairs = [
        ("ap", average_precision(&ids, &rel), metrics::ap(&ids, &rel)),
        ("rr", reciprocal_rank(&ids, &rel), metrics::rr(&ids, &rel)),
        ("ndcg@1", ndcg_at(&ids, &rel, 1), metrics::ndcg(&ids, &rel, 1)),
        ("ndcg@5", ndcg_at(&ids, &rel, 5), metrics::ndcg(&ids, &rel, 5)),
        ("ndcg@10", ndcg_at(&ids, &rel, 10), metrics::ndcg(&ids, &rel, 10)),
    ];
    for (name, got, want) in pairs {
        if got.map(f64::to_bits) != Some(want.to_bits()) {
            return Err(format!("seed {seed} {name}: library {got:?} vs reference {want}"));
        }
    }
    Ok(())
}

/// Worked examples with values computed by hand.
pub fn metric_hand_cases() -> Check {
    let rel: BTreeSet<u32> = [1, 3].into();
    let ranked = [1u32, 2, 3, 4];
    let cases = [
        ("ap", average_precision(&ranked, &rel), (1.0 + 2.0 / 3.0) / 2.0),
        ("rr", reciprocal_rank(&[2u32, 1, 3], &rel), 0.5),
        ("ndcg@1", ndcg_at(&ranked, &rel, 1), 1.0),
        ("ndcg@5", ndcg_at(&ranked, &rel, 5), (1.0 + 0.5) / (1.0 + 1.0 / 3f64.log2())),
        ("ap-missing", average_precision(&[1u32], &rel), 0.5),
        ("rr-none", reciprocal_rank(&[2u32, 4], &rel), 0.0),
        ("ndcg-none", ndcg_at(&[2u32, 4], &rel, 10), 0.0),
    ];
    for (name, got, want) in cases {
        match got {
            Some(v) if (v - want).abs() <= 1e-15 => {}
            _ => return Err(format!("{name}: {got:?}, expected {want}")),
        }
    }
    if average_precision(&ranked, &BTreeSet::new()).is_some() {
        return Err("empty relevant set must be undefined".into());
    }
    Ok(())
}

/// B&N type scores on three entities with hand-worked probabilities.
pub fn bn_hand_case() -> Check {
    let mut b = CatalogBuilder::new();
    b.add_type("Entity", &[]).add_type("a", &["Entity"]).add_type("b", &["Entity"]);
    b.add_lemma("a", "alpha").add_lemma("b", "beta");
    b.add_entity("e1", &["a"]).add_entity("e2", &["a"]).add_entity("e3", &["b"]);
    let cat = b.build().map_err(|e| e.to_string())?;
    let desc = Descriptions::from_texts(&cat, [("e1", "red city"), ("e2", "Red red"), ("e3", "blue")])
        .map_err(|e| e.to_string())?;
    let mu = 0.1;
    // Collection: red 3, city 1, blue 1 out of 5 tokens.
    let (red, city) = (0.6, 0.2);
    let p_red = [0.9 * 0.5 + 0.1 * red, 0.9 * 1.0 + 0.1 * red, 0.1 * red];
    let p_city = [0.9 * 0.5 + 0.1 * city, 0.1 * city, 0.1 * city];
    let cases: [(&[&str], [f64; 3]); 2] = [
        (&["red"], p_red),
        (&["red", "city"], [p_red[0] * p_city[0], p_red[1] * p_city[1], p_red[2] * p_city[2]]),
    ];
    for (words, pe) in cases {
        let words: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        let got = bn_type_scores(&words, &desc, &cat, mu).map_err(|e| e.to_string())?;
        let want = [
            ("Entity", ((pe[0] + pe[1] + pe[2]) / 3.0).ln()),
            ("a", ((pe[0] + pe[1]) / 2.0).ln()),
            ("b", pe[2].ln()),
        ];
        for (name, v) in want {
            let t = cat.require_type(name).unwrap();
            let s = got
                .iter()
                .find(|s| s.t == t)
                .ok_or_else(|| format!("type {name} missing"))?;
            if (s.log_prob - v).abs() > 1e-12 {
                return Err(format!("{words:?} type {name}: {} vs {v}", s.log_prob));
            }
        }
        if !got.windows(2).all(|w| w[0].log_prob >= w[1].log_prob) {
            return Err("scores not sorted best first".into());
        }
    }
    Ok(())
}

/// Ten queries whose relevant entities alone mention a query word.
pub struct Separable {
    pub catalog: ter_core::catalog::Catalog,
    pub index: SnippetIndex,
    pub queries: Vec<Query>,
}

pub fn separable() -> Separable {
    const N: usize = 10;
    let mut b = CatalogBuilder::new();
    b.add_type("Entity", &[]).add_type("place", &["Entity"]);
    b.add_lemma("place", "place");
    let name = |q: usize, k: usize| format!("e{q}x{k}");
    for q in 0..N {
        for k in 0..2 {
            b.add_entity(&name(q, k), &["place"]);
        }
    }
    let catalog = b.build().unwrap();
    let mut docs = Vec::new();
    for q in 0..N {
        for k in 0..2 {
            let e = name(q, k);
            for rep in 0..2 {
                docs.push(RawDocument {
                    doc_id: format!("{e}-{rep}"),
                    tokens: vec![e.clone(), "near".into(), format!("k{q}"), "filler".into()],
                    mentions: vec![(0, 1, e.clone())],
                });
            }
        }
    }
    let index = SnippetIndex::build("separable", docs.into_iter().enumerate().map(|(i, d)| (i + 1, d)), &catalog, 3)
        .unwrap();
    let place = catalog.require_type("place").unwrap();
    let queries = (0..N)
        .map(|q| {
            let relevant: BTreeSet<EntityId> = (0..2).map(|k| catalog.require_entity(&name(q, k)).unwrap()).collect();
            let irrelevant: BTreeSet<EntityId> = catalog.entity_ids().filter(|e| !relevant.contains(e)).collect();
            Query {
                qid: format!("q{q}"),
                raw: format!("k{q} place"),
                words: vec![format!("k{q}"), "place".into()],
                judgments: Some(Judgments {
                    gold_type: Some(place),
                    relevant,
                    irrelevant,
                }),
            }
        })
        .collect();
    Separable { catalog, index, queries }
}

/// Gold-type counts of a query set.
pub fn gold_priors(s: &Separable, gamma: f64) -> TypePriorTable {
    TypePriorTable::from_gold_types(&s.catalog, s.queries.iter().filter_map(Query::gold_type), gamma).unwrap()
}

/// Itemwise training with a large `C` on [`separable`]: per-step objective
/// decrease, a non-increasing log and zero final hinge. Returns the final
/// hinge and objective.
pub fn training_sanity() -> Result<(f64, f64), String> {
    use ter_core::discriminative::{train, Schedule, SolverOptions, TrainMode};
    let s = separable();
    let hp = DiscHyperParams {
        c: 1e4,
        mode: TrainMode::Itemwise,
        schedule: Schedule {
            d0: 1.0,
            decay: 0.1,
            outer_iters: 6,
        },
        ..DiscHyperParams::default()
    };
    let (model, log) = train(&s.queries, &s.catalog, &s.index, &hp, SolverOptions::default()).map_err(|e| e.to_string())?;
    let tol = 1e-6;
    for r in &log.rows {
        if r.objective > r.objective_before + tol {
            return Err(format!("iter {}: λ-step raised the objective {} -> {}", r.iter, r.objective_before, r.objective));
        }
    }
    for w in log.rows.windows(2) {
        if w[1].objective > w[0].objective + tol {
            return Err(format!("objective rose {} -> {} at iter {}", w[0].objective, w[1].objective, w[1].iter));
        }
    }
    let last = log.rows.last().ok_or("empty log")?;
    if last.hinge > tol {
        return Err(format!("final hinge {}", last.hinge));
    }
    // Margins read back through inference: positives ≥ 1, negatives ≤ -1.
    let ranker = DiscriminativeRanker::new(&s.catalog, &s.index, &model).map_err(|e| e.to_string())?;
    for q in &s.queries {
        let j = q.judgments.as_ref().unwrap();
        for &e in &j.relevant {
            let sc = ranker.infer(q, e).map_err(|e| e.to_string())?.score;
            if sc < 1.0 - tol {
                return Err(format!("{} positive {} scores {sc}", q.qid, s.catalog.entity_name(e)));
            }
        }
        for &e in &j.irrelevant {
            let sc = ranker.infer(q, e).map_err(|e| e.to_string())?.score;
            if sc > -1.0 + tol {
                return Err(format!("{} negative {} scores {sc}", q.qid, s.catalog.entity_name(e)));
            }
        }
    }
    Ok((last.hinge, last.objective))
}
