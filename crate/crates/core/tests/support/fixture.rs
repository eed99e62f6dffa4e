//! Seeded random catalogs, corpora and queries.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ter_core::catalog::{Catalog, CatalogBuilder, TypePriorTable};
use ter_core::index::{RawDocument, SnippetIndex};
use ter_core::query::{parse_query, Query};

pub const VOCAB: [&str; 8] = ["red", "blue", "green", "city", "team", "river", "old", "new"];
pub const NAMES: [&str; 8] = ["alpha", "bravo", "carol", "delta", "echo", "foxtrot", "golf", "hotel"];
/// Never appears in a corpus.
pub const UNSEEN: &str = "zzz";

#[derive(Debug, Clone, Copy)]
pub struct Size {
    pub max_types: usize,
    pub max_entities: usize,
    pub max_docs: usize,
    pub max_doc_len: usize,
    pub max_query: usize,
}

/// At most 5 entities, 4 types and 4 query words.
pub const SMALL: Size = Size {
    max_types: 4,
    max_entities: 5,
    max_docs: 6,
    max_doc_len: 12,
    max_query: 4,
};

/// Corpora of at most 1,000 tokens.
pub const CORPUS: Size = Size {
    max_types: 5,
    max_entities: 8,
    max_docs: 40,
    max_doc_len: 25,
    max_query: 4,
};

#[derive(Debug, Clone)]
pub struct TypeSpec {
    pub name: String,
    pub parents: Vec<usize>,
    /// Lemma token lists, in declaration order.
    pub lemmas: Vec<Vec<String>>,
}

pub struct Fixture {
    pub types: Vec<TypeSpec>,
    /// Entity name and declared types.
    pub entities: Vec<(String, Vec<usize>)>,
    pub docs: Vec<RawDocument>,
    pub window: usize,
    pub hits: Vec<u32>,
    pub gamma: f64,
    pub catalog: Catalog,
    pub index: SnippetIndex,
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn lemma(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(1..=2);
    let mut v: Vec<String> = Vec::new();
    while v.len() < n {
        let w = pick(rng, &VOCAB).to_owned();
        if !v.contains(&w) {
            v.push(w);
        }
    }
    v
}

impl Fixture {
    pub fn random(seed: u64, size: Size) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_types = rng.random_range(1..=size.max_types);
        let mut types = vec![TypeSpec {
            name: "Entity".into(),
            parents: Vec::new(),
            lemmas: vec![vec!["entity".into()]],
        }];
        if rng.random_bool(0.3) {
            types[0].lemmas.push(lemma(&mut rng));
        }
        for i in 1..n_types {
            let mut parents = vec![rng.random_range(0..i)];
            if i > 1 && rng.random_bool(0.4) {
                let p = rng.random_range(0..i);
                if !parents.contains(&p) {
                    parents.push(p);
                }
            }
            let mut lemmas = vec![lemma(&mut rng)];
            if rng.random_bool(0.4) {
                let l = lemma(&mut rng);
                if !lemmas.contains(&l) {
                    lemmas.push(l);
                }
            }
            types.push(TypeSpec {
                name: format!("t{i}"),
                parents,
                lemmas,
            });
        }

        let n_entities = rng.random_range(1..=size.max_entities.min(NAMES.len()));
        let entities: Vec<(String, Vec<usize>)> = (0..n_entities)
            .map(|i| {
                let mut declared = vec![rng.random_range(0..n_types)];
                if rng.random_bool(0.3) {
                    let t = rng.random_range(0..n_types);
                    if !declared.contains(&t) {
                        declared.push(t);
                    }
                }
                (NAMES[i].to_owned(), declared)
            })
            .collect();

        let n_docs = rng.random_range(0..=size.max_docs);
        let docs = (0..n_docs)
            .map(|d| {
                let len = rng.random_range(1..=size.max_doc_len);
                let mut tokens: Vec<String> = (0..len)
                    .map(|_| {
                        let w = pick(&mut rng, &VOCAB);
                        if rng.random_bool(0.1) {
                            w.to_uppercase()
                        } else {
                            w.to_owned()
                        }
                    })
                    .collect();
                let mut mentions = Vec::new();
                let mut pos = 0;
                while pos < len {
                    if rng.random_bool(0.3) {
                        let span = if pos + 1 < len && rng.random_bool(0.2) { 2 } else { 1 };
                        let e = rng.random_range(0..n_entities);
                        tokens[pos] = entities[e].0.clone();
                        mentions.push((pos as u32, (pos + span) as u32, entities[e].0.clone()));
                        pos += span;
                    } else {
                        pos += 1;
                    }
                }
                RawDocument {
                    doc_id: format!("d{d}"),
                    tokens,
                    mentions,
                }
            })
            .collect::<Vec<_>>();

        let window = rng.random_range(1..=4);
        let hits = (0..n_types).map(|_| rng.random_range(0..=3)).collect();
        let gamma = [0.1, 0.5, 0.9][rng.random_range(0..3)];

        let mut b = CatalogBuilder::new();
        for t in &types {
            let parents: Vec<&str> = t.parents.iter().map(|&p| types[p].name.as_str()).collect();
            b.add_type(&t.name, &parents);
            for l in &t.lemmas {
                b.add_lemma(&t.name, &l.join(" "));
            }
        }
        for (name, declared) in &entities {
            let ts: Vec<&str> = declared.iter().map(|&t| types[t].name.as_str()).collect();
            b.add_entity(name, &ts);
        }
        let catalog = b.build().expect("fixture catalog is valid");
        let index = SnippetIndex::build(
            "fixture",
            docs.iter().cloned().enumerate().map(|(i, d)| (i + 1, d)),
            &catalog,
            window,
        )
        .expect("fixture corpus is valid");
        Fixture {
            types,
            entities,
            docs,
            window,
            hits,
            gamma,
            catalog,
            index,
        }
    }

    pub fn priors(&self) -> TypePriorTable {
        let mut p = TypePriorTable::new(&self.catalog, self.gamma).unwrap();
        for (t, &n) in self.hits.iter().enumerate() {
            let id = self.catalog.require_type(&self.types[t].name).unwrap();
            for _ in 0..n {
                p.record(id).unwrap();
            }
        }
        p
    }

    /// Query words drawn from the vocabulary, the entity names and one
    /// unseen word; repeats allowed.
    pub fn random_query(&self, rng: &mut ChaCha8Rng, max_len: usize) -> Query {
        let mut pool: Vec<&str> = VOCAB.to_vec();
        pool.extend(self.entities.iter().map(|(n, _)| n.as_str()));
        pool.push(UNSEEN);
        let n = rng.random_range(1..=max_len);
        let words: Vec<&str> = (0..n).map(|_| pick(rng, &pool)).collect();
        parse_query(&words.join(" ")).unwrap()
    }
}
