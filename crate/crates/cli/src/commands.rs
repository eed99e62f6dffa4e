//! Command implementations. Each writes machine-readable output to `out`
//! and files under the configured paths.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use ter_core::catalog::{load_catalog, Catalog, TypePriorTable};
use ter_core::discriminative::{
    dot, read_model, train as train_model, write_model, DiscriminativeRanker, Model, SolverOptions,
    FEATURE_NAMES,
};
use ter_core::eval::report::baseline_ap;
use ter_core::eval::{
    cross_validate, evaluate_fixed, generative_grid, read_run_file, render_runs, sweep_generative, Engine,
    RankerKind, Report, Run,
};
use ter_core::generative::GenerativeRanker;
use ter_core::index::{build_index as index_corpus, read_image, write_image, SnippetIndex};
use ter_core::query::{load_queries, parse_query, Query};
use ter_core::synth::{generate, SynthSpec};
use ter_core::typepred::{bn_type_scores, Descriptions};
use ter_core::{Error, Result};

use crate::config::Config;

/// Powers of ten inside (0, 1) searched by `--sweep-generative`.
const SWEEP_VALUES: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, body).map_err(io_err(path))
}

fn catalog(cfg: &Config) -> Result<Catalog> {
    let p = &cfg.paths;
    load_catalog(
        &Config::require(&p.types, "types")?,
        &Config::require(&p.entities, "entities")?,
        &Config::require(&p.lemmas, "lemmas")?,
    )
}

/// The index image when one exists on disk, otherwise a fresh build from
/// the corpus.
fn index(cfg: &Config, cat: &Catalog) -> Result<SnippetIndex> {
    if let Some(img) = cfg.paths.index.as_ref().filter(|p| p.is_file()) {
        let idx = read_image(img, cat)?;
        if idx.window() != cfg.retrieval.window {
            return Err(Error::Config(format!(
                "index image {} uses window {}, config says {}; rebuild it",
                img.display(),
                idx.window(),
                cfg.retrieval.window
            )));
        }
        return Ok(idx);
    }
    index_corpus(&Config::require(&cfg.paths.corpus, "corpus")?, cat, cfg.retrieval.window)
}

fn queries(cfg: &Config, cat: &Catalog) -> Result<Vec<Query>> {
    load_queries(&Config::require(&cfg.paths.queries, "queries")?, cat)
}

fn model_path(cfg: &Config, flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| cfg.paths.model.clone())
}

/// Reads the model named by the flag or config; `required` turns a
/// missing one into an error.
fn load_model(cfg: &Config, cat: &Catalog, flag: Option<PathBuf>, required: bool) -> Result<Option<Model>> {
    match model_path(cfg, flag) {
        Some(p) if p.is_file() => read_model(&p, cat).map(Some),
        Some(p) if required => Err(Error::Config(format!("model file {} does not exist; run `ter train`", p.display()))),
        None if required => Err(Error::Config("paths.model is not set".into())),
        _ => Ok(None),
    }
}

/// Generative priors: the model's training counts when there is a model,
/// else the gold types of the configured queries, else flat.
fn priors(cfg: &Config, cat: &Catalog, model: Option<&Model>) -> Result<TypePriorTable> {
    let gamma = cfg.generative.gamma;
    if let Some(m) = model {
        return m.priors.with_gamma(gamma);
    }
    if cfg.paths.queries.is_some() {
        let qs = queries(cfg, cat)?;
        return TypePriorTable::from_gold_types(cat, qs.iter().filter_map(Query::gold_type), gamma);
    }
    TypePriorTable::new(cat, gamma)
}

fn partition_mode(cfg: &Config, model: Option<&Model>) -> ter_core::query::PartitionMode {
    model.map_or(cfg.training.partition_mode, |m| m.hp.partition_mode)
}

fn named_query(text: &str) -> Result<Query> {
    let mut q = parse_query(text)?;
    q.qid = "query".into();
    Ok(q)
}

pub fn build_index(cfg: &Config, out: Option<PathBuf>) -> Result<()> {
    let cat = catalog(cfg)?;
    let dest = match out {
        Some(p) => p,
        None => Config::require(&cfg.paths.index, "index")?,
    };
    let idx = index_corpus(&Config::require(&cfg.paths.corpus, "corpus")?, &cat, cfg.retrieval.window)?;
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_image(&idx, &dest)?;
    log::info!("indexed {} documents into {}", idx.doc_count(), dest.display());
    Ok(())
}

pub fn search(
    cfg: &Config,
    text: &str,
    type_id: Option<&str>,
    ranker: &str,
    k: usize,
    model_flag: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let kind = RankerKind::parse(ranker, cfg.evaluation.two_stage_k)?;
    let cat = catalog(cfg)?;
    let idx = index(cfg, &cat)?;
    let q = named_query(text)?;
    let model = load_model(cfg, &cat, model_flag, kind.needs_model())?;
    let pri = priors(cfg, &cat, model.as_ref())?;
    let gen = GenerativeRanker::new(&cat, &idx, &pri, cfg.generative, partition_mode(cfg, model.as_ref()))?
        .with_entity_prior(cfg.entity_prior);
    let engine = Engine::new(&cat, &idx, cfg.retrieval.theta);
    let disc = model.as_ref().map(|m| DiscriminativeRanker::new(&cat, &idx, m)).transpose()?;
    let mut run = match kind {
        RankerKind::Generic => engine.run_generic(&q, &gen)?,
        RankerKind::Generative => engine.run_generative(&q, &gen)?,
        RankerKind::Perfect => {
            let t = type_id.ok_or_else(|| Error::Config("--ranker perfect needs --type".into()))?;
            engine.run_perfect(&q, cat.require_type(t)?, &gen)?
        }
        RankerKind::Discriminative => engine.run_discriminative(&q, disc.as_ref().expect("required"))?,
        RankerKind::TwoStage { k } => engine.run_two_stage(&q, disc.as_ref().expect("required"), k, &gen)?,
    };
    run.entries.truncate(k);
    emit(out, &render_runs(&[run], &cat))
}

pub fn train(cfg: &Config, model_out: Option<PathBuf>, log_out: Option<PathBuf>) -> Result<()> {
    let cat = catalog(cfg)?;
    let idx = index(cfg, &cat)?;
    let qs = queries(cfg, &cat)?;
    let dest = match model_out {
        Some(p) => p,
        None => Config::require(&cfg.paths.model, "model")?,
    };
    let log_path = log_out.or_else(|| cfg.paths.train_log.clone()).unwrap_or_else(|| {
        let mut s = dest.clone().into_os_string();
        s.push(".log.tsv");
        PathBuf::from(s)
    });
    let (model, log) = train_model(&qs, &cat, &idx, &cfg.training, SolverOptions::default())?;
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_model(&model, &cat, &dest)?;
    write_file(&log_path, &log.to_tsv())
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    cfg: &Config,
    ranker: &str,
    baseline_run: Option<PathBuf>,
    dir: Option<PathBuf>,
    model_flag: Option<PathBuf>,
    sweep: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let kind = RankerKind::parse(ranker, cfg.evaluation.two_stage_k)?;
    let cat = catalog(cfg)?;
    let idx = index(cfg, &cat)?;
    let qs = queries(cfg, &cat)?;
    let dir = match dir {
        Some(d) => d,
        None => Config::require(&cfg.paths.out, "out")?,
    };
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let engine = Engine::new(&cat, &idx, cfg.retrieval.theta);
    let mut exp = cfg.experiment();
    if sweep {
        let grid = generative_grid(&SWEEP_VALUES);
        let (best, scored) = sweep_generative(&engine, &qs, &grid, &exp)?;
        let mut s = String::from("alpha\tbeta\tgamma\tdelta\tmap\n");
        for (hp, map) in &scored {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", hp.alpha, hp.beta, hp.gamma, hp.delta, fmt_f(*map));
        }
        write_file(&dir.join("sweep.tsv"), &s)?;
        exp.gen = best;
        exp.disc.beta = best.beta;
        exp.disc.gamma = best.gamma;
    }
    let evaluation = match model_flag {
        Some(p) => {
            let model = read_model(&p, &cat)?;
            evaluate_fixed(&engine, &qs, &[kind], &exp, &model)?
        }
        None => cross_validate(&engine, &qs, &[kind], &exp, SolverOptions::default())?,
    };
    let rows = evaluation.metrics(kind, &qs);
    let base = baseline_run
        .map(|p| read_run_file(&p).map(|b| baseline_ap(&b, &qs, &rows, &cat)))
        .transpose()?;
    let report = Report::new(
        rows,
        evaluation.excluded.clone(),
        base,
        cfg.evaluation.permutations,
        cfg.evaluation.fold_seed,
    );
    write_file(&dir.join("report.tsv"), &report.render())?;
    let runs: &[Run] = evaluation.runs.get(&kind).map_or(&[], Vec::as_slice);
    write_file(&dir.join("runs.tsv"), &render_runs(runs, &cat))?;
    let agg = evaluation.aggregate(kind, &qs);
    let mut line = format!(
        "{}\tmap={}\tmrr={}\tndcg@1={}\tndcg@5={}\tndcg@10={}\tqueries={}\texcluded={}",
        kind.label(),
        fmt_f(agg.map),
        fmt_f(agg.mrr),
        fmt_f(agg.ndcg[0]),
        fmt_f(agg.ndcg[1]),
        fmt_f(agg.ndcg[2]),
        report.rows.len(),
        report.excluded.len()
    );
    if let Some(p) = report.p_value {
        let _ = write!(line, "\tp_value={}", fmt_f(p));
    }
    if !evaluation.chosen_c.is_empty() {
        let cs: Vec<String> = evaluation.chosen_c.iter().map(|c| c.to_string()).collect();
        let _ = write!(line, "\tchosen_c={}", cs.join(","));
    }
    line.push('\n');
    emit(out, &line)
}

pub fn predict_type(
    cfg: &Config,
    text: Option<&str>,
    method: &str,
    k: Option<usize>,
    model_flag: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let k = k.unwrap_or(cfg.type_prediction.k);
    if k == 0 {
        return Err(Error::Config("--k must be >= 1".into()));
    }
    let cat = catalog(cfg)?;
    let qs = match text {
        Some(t) => vec![named_query(t)?],
        None => queries(cfg, &cat)?,
    };
    let mut s = String::new();
    match method {
        "ours" => {
            let idx = index(cfg, &cat)?;
            let model = load_model(cfg, &cat, model_flag, true)?.expect("required");
            let disc = DiscriminativeRanker::new(&cat, &idx, &model)?;
            let engine = Engine::new(&cat, &idx, cfg.retrieval.theta);
            for q in &qs {
                let Some(p) = engine.predict(q, &disc, k)? else {
                    log::warn!("query {}: retrieval found no candidates", q.qid);
                    continue;
                };
                for (i, (t, sum)) in p.ranked.iter().enumerate() {
                    let _ = writeln!(s, "{}\t{}\t{}\t{}", q.qid, i + 1, cat.type_name(*t), sum);
                }
            }
        }
        "bn" => {
            let path = Config::require(&cfg.paths.descriptions, "descriptions")?;
            let desc = Descriptions::load(&path, &cat)?;
            for q in &qs {
                let scores = bn_type_scores(&q.words, &desc, &cat, cfg.type_prediction.bn_mu)?;
                for (i, b) in scores.iter().take(k).enumerate() {
                    let _ = writeln!(s, "{}\t{}\t{}\t{}", q.qid, i + 1, cat.type_name(b.t), b.log_prob);
                }
            }
        }
        other => return Err(Error::Config(format!("unknown type prediction method `{other}`"))),
    }
    emit(out, &s)
}

pub fn explain(
    cfg: &Config,
    text: &str,
    entity: &str,
    ranker: &str,
    model_flag: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let cat = catalog(cfg)?;
    let idx = index(cfg, &cat)?;
    let q = named_query(text)?;
    let e = cat.require_entity(entity)?;
    let mut s = String::new();
    let _ = writeln!(s, "entity\t{entity}");
    let _ = writeln!(s, "words\t{}", q.words.join(" "));
    let z = match ranker {
        "generative" => {
            let model = load_model(cfg, &cat, model_flag, false)?;
            let pri = priors(cfg, &cat, model.as_ref())?;
            let gen = GenerativeRanker::new(&cat, &idx, &pri, cfg.generative, partition_mode(cfg, model.as_ref()))?
                .with_entity_prior(cfg.entity_prior);
            let score = gen.score_entity(&q, e, false)?;
            let ex = gen.explain(&q, e)?;
            let _ = writeln!(s, "score\t{}", score.log_mass);
            let _ = writeln!(s, "type\t{}", cat.type_name(ex.best_t));
            let _ = writeln!(s, "hint\t{}", ex.best_z);
            for (t, p) in &ex.type_marginals {
                let _ = writeln!(s, "type_marginal\t{}\t{}", cat.type_name(*t), p);
            }
            for (w, p) in q.words.iter().zip(&ex.hint_marginals) {
                let _ = writeln!(s, "hint_marginal\t{w}\t{p}");
            }
            ex.best_z
        }
        "discriminative" => {
            let model = load_model(cfg, &cat, model_flag, true)?.expect("required");
            let disc = DiscriminativeRanker::new(&cat, &idx, &model)?;
            let fq = disc.prepare(&q);
            let ef = fq.entity(e)?;
            let inf = disc.infer(&q, e)?;
            let _ = writeln!(s, "score\t{}", inf.score);
            let _ = writeln!(s, "type\t{}", cat.type_name(inf.best_t));
            let _ = writeln!(s, "hint\t{}", inf.best_z);
            let best = fq
                .latents(&ef)
                .find(|&l| fq.type_of(&ef, l) == inf.best_t && fq.switch_of(l) == inf.best_z)
                .expect("argmax latent is enumerable");
            let phi = fq.features(&ef, best);
            debug_assert_eq!(dot(&model.lambda, &phi), inf.score);
            for ((name, v), w) in FEATURE_NAMES.iter().zip(phi).zip(&model.lambda) {
                let _ = writeln!(s, "feature\t{name}\t{v}\t{w}");
            }
            inf.best_z
        }
        other => return Err(Error::Config(format!("explain supports generative or discriminative, not `{other}`"))),
    };
    for (j, w) in q.words.iter().enumerate() {
        let role = if z.is_hint(j) { "hint" } else { "selector" };
        let _ = writeln!(s, "word\t{w}\t{role}");
    }
    emit(out, &s)
}

pub fn synth(preset: &str, dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = SynthSpec::preset(preset)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    generate(&spec)?.write_to(dir)
}
