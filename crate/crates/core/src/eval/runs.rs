//! Candidate pools, the five rankers as runs, and the run file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::catalog::{Catalog, EntityId, TypeId};
use crate::discriminative::DiscriminativeRanker;
use crate::error::{Error, Result};
use crate::generative::GenerativeRanker;
use crate::index::{QueryTerm, SnippetIndex, WandQuery};
use crate::query::{Query, SwitchVector};
use crate::typepred::{predict_type, TypePrediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RankerKind {
    Generic,
    Generative,
    Discriminative,
    Perfect,
    TwoStage { k: usize },
}

impl RankerKind {
    pub fn label(&self) -> String {
        match self {
            RankerKind::Generic => "generic".into(),
            RankerKind::Generative => "generative".into(),
            RankerKind::Discriminative => "discriminative".into(),
            RankerKind::Perfect => "perfect".into(),
            RankerKind::TwoStage { k } => format!("two-stage@{k}"),
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, RankerKind::Discriminative | RankerKind::TwoStage { .. })
    }

    pub fn parse(name: &str, k: usize) -> Result<Self> {
        Ok(match name {
            "generic" => RankerKind::Generic,
            "generative" => RankerKind::Generative,
            "discriminative" => RankerKind::Discriminative,
            "perfect" => RankerKind::Perfect,
            "two-stage" => RankerKind::TwoStage { k },
            other => return Err(Error::Config(format!("unknown ranker `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunEntry {
    pub entity: EntityId,
    pub score: f64,
    pub best_type: TypeId,
    pub hint: SwitchVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub qid: String,
    pub entries: Vec<RunEntry>,
}

impl Run {
    pub fn entities(&self) -> Vec<EntityId> {
        self.entries.iter().map(|e| e.entity).collect()
    }
}

/// Retrieval front end shared by all rankers.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub catalog: &'a Catalog,
    pub index: &'a SnippetIndex,
    /// WAND threshold θ for candidate retrieval.
    pub theta: f64,
}

impl<'a> Engine<'a> {
    pub fn new(catalog: &'a Catalog, index: &'a SnippetIndex, theta: f64) -> Self {
        Engine { catalog, index, theta }
    }

    /// Entities with at least one snippet retrieved for the query words
    /// under type `t`, ascending by id.
    pub fn candidate_pool(&self, q: &Query, t: TypeId) -> Result<Vec<EntityId>> {
        let mut words = q.words.clone();
        words.sort();
        words.dedup();
        let wq = WandQuery::new(
            t,
            words.into_iter().map(QueryTerm::Word).collect(),
            self.theta,
            self.index.window(),
        );
        let mut pool: Vec<EntityId> = self.index.retrieve(self.catalog, &wq)?.map(|s| s.entity).collect();
        pool.sort_unstable();
        pool.dedup();
        Ok(pool)
    }

    fn sort_entries(&self, entries: &mut [RunEntry]) {
        let c = self.catalog;
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| c.entity_name(a.entity).cmp(c.entity_name(b.entity)))
        });
    }

    /// Root type, every word a selector: `log Pr(e) + log Pr(q|e)` over the
    /// candidates retrieved under `t`.
    fn selector_run(&self, q: &Query, t: TypeId, gen: &GenerativeRanker) -> Result<Run> {
        let pool = self.candidate_pool(q, t)?;
        let gq = gen.prepare(q);
        let all_s = SwitchVector::all_selector(q.len());
        let mut entries: Vec<RunEntry> = pool
            .iter()
            .map(|&e| RunEntry {
                entity: e,
                score: gq.generic_log_score(e),
                best_type: t,
                hint: all_s,
            })
            .collect();
        self.sort_entries(&mut entries);
        Ok(Run {
            qid: q.qid.clone(),
            entries,
        })
    }

    pub fn run_generic(&self, q: &Query, gen: &GenerativeRanker) -> Result<Run> {
        self.selector_run(q, self.catalog.root(), gen)
    }

    pub fn run_perfect(&self, q: &Query, gold: TypeId, gen: &GenerativeRanker) -> Result<Run> {
        self.selector_run(q, gold, gen)
    }

    pub fn run_generative(&self, q: &Query, gen: &GenerativeRanker) -> Result<Run> {
        let pool = self.candidate_pool(q, self.catalog.root())?;
        let scores = gen.rank(q, &pool)?;
        Ok(Run {
            qid: q.qid.clone(),
            entries: scores
                .into_iter()
                .map(|s| RunEntry {
                    entity: s.entity,
                    score: s.log_mass,
                    best_type: s.best_t,
                    hint: s.best_z,
                })
                .collect(),
        })
    }

    pub fn run_discriminative(&self, q: &Query, disc: &DiscriminativeRanker) -> Result<Run> {
        let pool = self.candidate_pool(q, self.catalog.root())?;
        let ranked = disc.rank(q, &pool)?;
        Ok(Run {
            qid: q.qid.clone(),
            entries: ranked
                .into_iter()
                .map(|r| RunEntry {
                    entity: r.entity,
                    score: r.score,
                    best_type: r.best_t,
                    hint: r.best_z,
                })
                .collect(),
        })
    }

    /// Predicted type from the top `k` discriminative results; `None` when
    /// retrieval found nothing.
    pub fn predict(&self, q: &Query, disc: &DiscriminativeRanker, k: usize) -> Result<Option<TypePrediction>> {
        let run = self.run_discriminative(q, disc)?;
        if run.entries.is_empty() {
            return Ok(None);
        }
        let fq = disc.prepare(q);
        let lambda = &disc.model.lambda;
        predict_type(&run.entities(), k, |e| {
            crate::discriminative::type_scores_prepared(&fq, lambda, e)
        })
        .map(Some)
    }

    /// Keep only the predicted type, then rank as the perfect baseline.
    pub fn run_two_stage(
        &self,
        q: &Query,
        disc: &DiscriminativeRanker,
        k: usize,
        gen: &GenerativeRanker,
    ) -> Result<Run> {
        match self.predict(q, disc, k)? {
            Some(p) => self.run_perfect(q, p.best(), gen),
            None => Ok(Run {
                qid: q.qid.clone(),
                entries: Vec::new(),
            }),
        }
    }
}

fn fmt_score(s: f64) -> String {
    if s == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        s.to_string()
    }
}

/// `qid rank entity_id score best_type hint_mask`, one line per entry.
pub fn render_runs(runs: &[Run], catalog: &Catalog) -> String {
    let mut s = String::new();
    for run in runs {
        for (i, e) in run.entries.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                run.qid,
                i + 1,
                catalog.entity_name(e.entity),
                fmt_score(e.score),
                catalog.type_name(e.best_type),
                e.hint
            );
        }
    }
    s
}

/// Reads rankings back as `qid → entity ids in rank order`.
pub fn read_run_file(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let malformed = |m: &str| Error::Malformed {
            file: path.display().to_string(),
            line: i + 1,
            message: m.to_owned(),
        };
        if f.len() != 6 {
            return Err(malformed("expected 6 tab-separated fields"));
        }
        let rank: usize = f[1].parse().map_err(|_| malformed("bad rank"))?;
        rows.entry(f[0].to_owned()).or_default().push((rank, f[2].to_owned()));
    }
    Ok(rows
        .into_iter()
        .map(|(q, mut v)| {
            v.sort_by_key(|x| x.0);
            (q, v.into_iter().map(|x| x.1).collect())
        })
        .collect())
}
