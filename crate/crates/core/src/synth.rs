//! Seeded generator for small judged benchmarks.
//!
//! Each query names a target type through lemma words and a topic through
//! selector words. Relevant entities are members of the target type seen
//! near the topic words. Distractors of other types are seen near the same
//! topic words more often than the answers; near misses of the target type
//! are seen near one topic word only. Some queries use type words that a
//! decoy type shares, and then most distractors come from the decoy and
//! stay unjudged. Type-blind ranking confuses distractors with answers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::index::RawDocument;
use crate::query::QueryRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub queries: usize,
    pub entities: usize,
    /// Including the root.
    pub types: usize,
    pub mid_types: usize,
    pub documents: usize,
    pub seed: u64,
    /// Relevant entities per query, at most.
    pub relevant: usize,
    pub distractors: usize,
    /// Of the distractors, how many share the gold type's parent.
    pub sibling_distractors: usize,
    /// Gold-type members judged irrelevant, seen near one topic word only.
    pub near_misses: usize,
    /// Documents per distractor for each document per answer.
    pub distractor_docs: usize,
    /// Fraction of queries whose gold type is a mid-level type.
    pub mid_gold: f64,
    /// Chance a type word lands next to an answer, and next to a distractor.
    pub hint_near_answer: f64,
    pub hint_near_distractor: f64,
    /// Chance each topic word lands next to a distractor.
    pub topic_near_distractor: f64,
    /// Chance a document also mentions an unrelated entity.
    pub bystander: f64,
    /// Fraction of leaf-typed queries whose type words also name a decoy
    /// leaf under another parent; most distractors then come from the decoy.
    pub ambiguous: f64,
}

impl SynthSpec {
    /// 50 queries, 200 entities, 30 types, 2000 documents.
    pub fn benchmark() -> Self {
        SynthSpec {
            queries: 50,
            entities: 200,
            types: 30,
            mid_types: 5,
            documents: 2000,
            seed: 20130501,
            relevant: 4,
            distractors: 5,
            sibling_distractors: 0,
            near_misses: 2,
            distractor_docs: 2,
            mid_gold: 0.4,
            hint_near_answer: 0.2,
            hint_near_distractor: 0.3,
            topic_near_distractor: 0.8,
            bystander: 0.3,
            ambiguous: 0.35,
        }
    }

    /// 8 queries over 7 types.
    pub fn toy() -> Self {
        SynthSpec {
            queries: 8,
            entities: 24,
            types: 7,
            mid_types: 2,
            documents: 120,
            seed: 7,
            relevant: 2,
            distractors: 2,
            sibling_distractors: 0,
            near_misses: 1,
            distractor_docs: 2,
            mid_gold: 0.25,
            hint_near_answer: 0.2,
            hint_near_distractor: 0.3,
            topic_near_distractor: 0.8,
            bystander: 0.2,
            ambiguous: 0.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "benchmark" => Ok(Self::benchmark()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown synthetic preset `{other}`"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let leaves = self.types.saturating_sub(1 + self.mid_types);
        if self.mid_types == 0 || leaves < self.mid_types {
            return Err(Error::Config("need at least one leaf type per mid-level type".into()));
        }
        if self.entities < leaves * 2 || self.queries == 0 {
            return Err(Error::Config("too few entities or queries for the type layout".into()));
        }
        if self.documents < self.queries * (self.relevant + self.distractors) {
            return Err(Error::Config("too few documents for the judged entities".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct TypeDef {
    id: String,
    parent: Option<usize>,
    lemma: Vec<String>,
    aliases: Vec<Vec<String>>,
}

/// Generated catalog, corpus, judgments and descriptions.
#[derive(Debug, Clone)]
pub struct SynthData {
    types: Vec<TypeDef>,
    entity_ids: Vec<String>,
    entity_types: Vec<Vec<usize>>,
    pub corpus: Vec<RawDocument>,
    pub queries: Vec<QueryRecord>,
    pub descriptions: Vec<(String, String)>,
    /// Per query, the answer planted with the strongest topic evidence.
    pub planted: Vec<String>,
}

struct Words {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Words {
    fn fresh(&mut self) -> String {
        const C: &[u8] = b"bdfgklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let syl = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syl {
                w.push(C[self.rng.random_range(0..C.len())] as char);
                w.push(V[self.rng.random_range(0..V.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

struct Doc {
    tokens: Vec<String>,
    mentions: Vec<(u32, u32, String)>,
}

impl Doc {
    fn new() -> Self {
        Doc {
            tokens: Vec::new(),
            mentions: Vec::new(),
        }
    }

    fn push_words(&mut self, ws: &[String]) {
        self.tokens.extend(ws.iter().cloned());
    }

    fn push_mention(&mut self, id: &str) {
        let start = self.tokens.len() as u32;
        self.tokens.extend(id.split('_').map(str::to_owned));
        self.mentions.push((start, self.tokens.len() as u32, id.to_owned()));
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed),
        used: BTreeSet::new(),
    };
    words.used.insert("entity".into());

    // Types: root, mid-level nouns, leaves "modifier noun".
    let mut types = vec![TypeDef {
        id: "entity".into(),
        parent: None,
        lemma: vec!["entity".into()],
        aliases: Vec::new(),
    }];
    let mids: Vec<usize> = (0..spec.mid_types)
        .map(|_| {
            let noun = words.fresh();
            types.push(TypeDef {
                id: noun.clone(),
                parent: Some(0),
                lemma: vec![noun],
                aliases: Vec::new(),
            });
            types.len() - 1
        })
        .collect();
    let n_leaves = spec.types - 1 - spec.mid_types;
    let leaves: Vec<usize> = (0..n_leaves)
        .map(|i| {
            let mid = mids[i % mids.len()];
            let modifier = words.fresh();
            let noun = words.fresh();
            types.push(TypeDef {
                id: format!("{modifier}_{noun}"),
                parent: Some(mid),
                lemma: vec![modifier, noun],
                aliases: Vec::new(),
            });
            types.len() - 1
        })
        .collect();

    // Entities: one leaf each, some a second leaf under another mid type.
    let mut entity_ids = Vec::with_capacity(spec.entities);
    let mut entity_types = Vec::with_capacity(spec.entities);
    for i in 0..spec.entities {
        let a = words.fresh();
        let b = words.fresh();
        entity_ids.push(format!("{a}_{b}"));
        let first = leaves[i % leaves.len()];
        let mut ts = vec![first];
        if rng.random_bool(0.25) {
            let second = leaves[rng.random_range(0..leaves.len())];
            if types[second].parent != types[first].parent {
                ts.push(second);
            }
        }
        entity_types.push(ts);
    }
    let closure = |ts: &[usize]| -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &t in ts {
            let mut cur = Some(t);
            while let Some(c) = cur {
                out.insert(c);
                cur = types[c].parent;
            }
        }
        out
    };
    let members: Vec<Vec<usize>> = (0..types.len())
        .map(|t| (0..spec.entities).filter(|&e| closure(&entity_types[e]).contains(&t)).collect())
        .collect();

    let filler = words.many(400);
    let topics = words.many(spec.queries * 2);
    let filler_run = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> Vec<String> {
        let n = if lo + 1 >= hi { lo } else { rng.random_range(lo..hi) };
        (0..n)
            .map(|_| {
                // Zipf-like skew over the filler list.
                let r: f64 = rng.random();
                let i = ((r * r) * filler.len() as f64) as usize;
                filler[i.min(filler.len() - 1)].clone()
            })
            .collect()
    };

    let mut docs: Vec<Doc> = Vec::new();
    let mut queries = Vec::new();
    let mut planted = Vec::new();
    let mut described: Vec<Vec<String>> = vec![Vec::new(); spec.entities];
    let mut aliases: Vec<(usize, usize)> = Vec::new();
    let per_query_docs = (spec.documents * 3 / 4) / spec.queries;

    for qi in 0..spec.queries {
        let gold = if rng.random_bool(spec.mid_gold) {
            mids[rng.random_range(0..mids.len())]
        } else {
            leaves[rng.random_range(0..leaves.len())]
        };
        let hint: Vec<String> = types[gold].lemma.clone();
        let topic = vec![topics[2 * qi].clone(), topics[2 * qi + 1].clone()];

        let pool = &members[gold];
        let n_rel = spec.relevant.min(pool.len().saturating_sub(1)).max(1);
        let mut chosen: Vec<usize> = sample(&mut rng, pool.len(), pool.len().min(n_rel + spec.near_misses))
            .into_vec()
            .into_iter()
            .map(|i| pool[i])
            .collect();
        let near_miss = chosen.split_off(n_rel.min(chosen.len()));
        let relevant = chosen;

        // Siblings sit under the same mid-level type.
        let gold_set: BTreeSet<usize> = pool.iter().copied().collect();
        let sibling_parent = types[gold].parent.filter(|&p| p != 0).unwrap_or(gold);
        let mut siblings: Vec<usize> = (0..spec.entities)
            .filter(|e| !gold_set.contains(e) && closure(&entity_types[*e]).contains(&sibling_parent))
            .collect();
        let mut others: Vec<usize> = (0..spec.entities)
            .filter(|e| !gold_set.contains(e) && !siblings.contains(e))
            .collect();
        siblings.shuffle(&mut rng);
        others.shuffle(&mut rng);
        let decoy = if spec.ambiguous > 0.0 && types[gold].parent != Some(0) && rng.random_bool(spec.ambiguous) {
            let cands: Vec<usize> = leaves
                .iter()
                .copied()
                .filter(|&t| types[t].parent != types[gold].parent)
                .collect();
            Some(cands[rng.random_range(0..cands.len())])
        } else {
            None
        };
        let mut distractors: Vec<usize> = Vec::new();
        let mut unjudged: BTreeSet<usize> = BTreeSet::new();
        if let Some(d) = decoy {
            aliases.push((d, gold));
            let mut from_decoy: Vec<usize> = members[d].iter().copied().filter(|e| !gold_set.contains(e)).collect();
            from_decoy.shuffle(&mut rng);
            distractors.extend(from_decoy.into_iter().take(spec.distractors / 2 + 1));
            unjudged.extend(distractors.iter().copied());
            others.retain(|e| !distractors.contains(e));
        }
        let n_sib = spec
            .sibling_distractors
            .min(spec.distractors - distractors.len())
            .min(siblings.len());
        distractors.extend(siblings.into_iter().take(n_sib));
        let rest = spec.distractors - distractors.len();
        distractors.extend(others.into_iter().take(rest));

        let budget = per_query_docs.max(relevant.len() + distractors.len() + near_miss.len());
        let mut slots: Vec<(usize, u8)> = Vec::new();
        // role 0: answer, 1: distractor, 2: near miss, 3: planted answer.
        slots.push((relevant[0], 3));
        slots.push((relevant[0], 3));
        let cycle: Vec<(usize, u8)> = relevant
            .iter()
            .map(|&e| (e, 0u8))
            .chain(
                distractors
                    .iter()
                    .flat_map(|&e| std::iter::repeat_n((e, 1u8), spec.distractor_docs.max(1))),
            )
            .chain(near_miss.iter().map(|&e| (e, 2u8)))
            .collect();
        let mut bystanders: BTreeSet<usize> = BTreeSet::new();
        let mut k = 0;
        while slots.len() < budget {
            slots.push(cycle[k % cycle.len()]);
            k += 1;
        }
        for (e, role) in slots {
            let mut d = Doc::new();
            d.push_words(&filler_run(&mut rng, 3, 8));
            let (p_topic, p_hint) = match role {
                3 => (1.0, spec.hint_near_answer),
                0 => (0.75, spec.hint_near_answer),
                1 => (spec.topic_near_distractor, spec.hint_near_distractor),
                _ => (0.35, spec.hint_near_answer),
            };
            let mut near: Vec<String> = Vec::new();
            for w in &topic {
                if rng.random_bool(p_topic) {
                    near.push(w.clone());
                }
            }
            if role == 2 && near.len() == topic.len() {
                near.pop();
            }
            if rng.random_bool(p_hint) {
                near.extend(hint.iter().cloned());
            }
            near.extend(filler_run(&mut rng, 2, 2));
            near.shuffle(&mut rng);
            let split = rng.random_range(0..=near.len());
            d.push_words(&near[..split]);
            d.push_mention(&entity_ids[e]);
            d.push_words(&near[split..]);
            d.push_words(&filler_run(&mut rng, 3, 8));
            if rng.random_bool(spec.bystander) {
                let b = rng.random_range(0..spec.entities);
                if b != e {
                    bystanders.insert(b);
                    d.push_mention(&entity_ids[b]);
                    d.push_words(&filler_run(&mut rng, 2, 5));
                }
            }
            docs.push(d);
        }

        for &e in &relevant {
            described[e].extend(topic.iter().cloned());
        }
        let mut irrelevant: BTreeSet<usize> = distractors.iter().chain(&near_miss).chain(bystanders.iter().filter(|b| !gold_set.contains(b))).copied().collect();
        for e in relevant.iter().chain(&unjudged) {
            irrelevant.remove(e);
        }
        let mut text_words = hint.clone();
        text_words.extend(topic.iter().cloned());
        if rng.random_bool(0.5) {
            text_words.rotate_left(hint.len());
        }
        let rel_names: BTreeSet<&String> = relevant.iter().map(|&e| &entity_ids[e]).collect();
        queries.push(QueryRecord {
            qid: format!("q{:03}", qi + 1),
            text: text_words.join(" "),
            gold_type: Some(types[gold].id.clone()),
            relevant: rel_names.iter().map(|s| (*s).clone()).collect(),
            irrelevant: irrelevant.iter().map(|&e| entity_ids[e].clone()).collect(),
        });
        planted.push(entity_ids[relevant[0]].clone());
    }

    for (decoy, gold) in aliases {
        let lemma = types[gold].lemma.clone();
        if !types[decoy].aliases.contains(&lemma) {
            types[decoy].aliases.push(lemma);
        }
    }

    // Background documents: popularity-skewed mentions, type words nearby.
    while docs.len() < spec.documents {
        let r: f64 = rng.random();
        let e = ((r * r * r) * spec.entities as f64) as usize % spec.entities;
        let mut d = Doc::new();
        d.push_words(&filler_run(&mut rng, 4, 10));
        d.push_mention(&entity_ids[e]);
        if rng.random_bool(0.3) {
            let t = *entity_types[e].first().expect("typed");
            d.push_words(&types[t].lemma);
        }
        d.push_words(&filler_run(&mut rng, 4, 10));
        docs.push(d);
    }
    docs.shuffle(&mut rng);

    let corpus = docs
        .into_iter()
        .enumerate()
        .map(|(i, d)| RawDocument {
            doc_id: format!("d{:05}", i + 1),
            tokens: d.tokens,
            mentions: d.mentions,
        })
        .collect();

    let descriptions = (0..spec.entities)
        .map(|e| {
            let mut ws: Vec<String> = Vec::new();
            for &t in &entity_types[e] {
                ws.extend(types[t].lemma.iter().cloned());
            }
            ws.extend(described[e].iter().cloned());
            ws.extend(filler_run(&mut rng, 6, 6));
            (entity_ids[e].clone(), ws.join(" "))
        })
        .collect();

    Ok(SynthData {
        types,
        entity_ids,
        entity_types,
        corpus,
        queries,
        descriptions,
        planted,
    })
}

impl SynthData {
    pub fn types_tsv(&self) -> String {
        let mut s = String::new();
        for t in &self.types {
            let parent = t.parent.map_or("", |p| self.types[p].id.as_str());
            let _ = writeln!(s, "{}\t{}", t.id, parent);
        }
        s
    }

    pub fn entities_tsv(&self) -> String {
        let mut s = String::new();
        for (id, ts) in self.entity_ids.iter().zip(&self.entity_types) {
            for &t in ts {
                let _ = writeln!(s, "{}\t{}", id, self.types[t].id);
            }
        }
        s
    }

    pub fn lemmas_tsv(&self) -> String {
        let mut s = String::new();
        for t in &self.types {
            let _ = writeln!(s, "{}\t{}", t.id, t.lemma.join(" "));
            for a in &t.aliases {
                let _ = writeln!(s, "{}\t{}", t.id, a.join(" "));
            }
        }
        s
    }

    fn jsonl<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> String {
        let mut s = String::new();
        for r in rows {
            s.push_str(&serde_json::to_string(&r).expect("serializable"));
            s.push('\n');
        }
        s
    }

    pub fn corpus_jsonl(&self) -> String {
        Self::jsonl(&self.corpus)
    }

    pub fn queries_jsonl(&self) -> String {
        Self::jsonl(&self.queries)
    }

    pub fn descriptions_jsonl(&self) -> String {
        Self::jsonl(self.descriptions.iter().map(|(e, t)| {
            let mut m = BTreeMap::new();
            m.insert("entity_id", e.as_str());
            m.insert("text", t.as_str());
            m
        }))
    }

    /// `qid<TAB>entity_id` for each planted answer.
    pub fn planted_tsv(&self) -> String {
        let mut s = String::new();
        for (q, e) in self.queries.iter().zip(&self.planted) {
            let _ = writeln!(s, "{}\t{}", q.qid, e);
        }
        s
    }

    /// File name and contents of every data file.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("types.tsv", self.types_tsv()),
            ("entities.tsv", self.entities_tsv()),
            ("lemmas.tsv", self.lemmas_tsv()),
            ("corpus.jsonl", self.corpus_jsonl()),
            ("queries.jsonl", self.queries_jsonl()),
            ("descriptions.jsonl", self.descriptions_jsonl()),
            ("planted.tsv", self.planted_tsv()),
        ]
    }

    /// Writes every data file into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.files() {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
