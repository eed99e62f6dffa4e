//! TOML configuration with dotted `--set` overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use ter_core::discriminative::DiscHyperParams;
use ter_core::eval::ExperimentConfig;
use ter_core::generative::{EntityPrior, GenHyperParams};
use ter_core::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub types: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Training log; defaults to the model path with `.log.tsv` appended.
    pub train_log: Option<PathBuf>,
    /// Directory for evaluation reports and runs.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Retrieval {
    pub theta: f64,
    /// Snippet window `W` in tokens.
    pub window: usize,
}

impl Default for Retrieval {
    fn default() -> Self {
        Retrieval { theta: 0.05, window: 20 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Evaluation {
    pub folds: usize,
    pub fold_seed: u64,
    pub c_grid: Vec<f64>,
    pub inner_folds: usize,
    pub permutations: usize,
    /// Entities consulted by the two-stage baseline.
    pub two_stage_k: usize,
}

impl Default for Evaluation {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Evaluation {
            folds: e.folds,
            fold_seed: e.fold_seed,
            c_grid: e.c_grid,
            inner_folds: e.inner_folds,
            permutations: ter_core::eval::DEFAULT_PERMUTATIONS,
            two_stage_k: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TypePrediction {
    pub k: usize,
    /// Description-model smoothing for the B&N baseline.
    pub bn_mu: f64,
}

impl Default for TypePrediction {
    fn default() -> Self {
        TypePrediction { k: 1, bn_mu: 0.1 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub entity_prior: EntityPrior,
    pub paths: Paths,
    pub retrieval: Retrieval,
    pub generative: GenHyperParams,
    pub training: DiscHyperParams,
    pub evaluation: Evaluation,
    pub type_prediction: TypePrediction,
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `a.b.c=value`; the value is read as TOML, falling back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Reads `path` (if any), applies overrides, and resolves relative
    /// paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", p.display(), e.message())))?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.resolve(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.types,
            &mut p.entities,
            &mut p.lemmas,
            &mut p.corpus,
            &mut p.queries,
            &mut p.descriptions,
            &mut p.index,
            &mut p.model,
            &mut p.train_log,
            &mut p.out,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.retrieval;
        if !(r.theta > 0.0 && r.theta <= 1.0) {
            return Err(Error::Config(format!("retrieval.theta must lie in (0,1], got {}", r.theta)));
        }
        if r.window == 0 {
            return Err(Error::Config("retrieval.window must be >= 1".into()));
        }
        self.generative.validate()?;
        self.training.validate()?;
        let e = &self.evaluation;
        if e.folds < 2 || e.inner_folds < 2 {
            return Err(Error::Config("evaluation.folds and inner_folds must be >= 2".into()));
        }
        if e.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config("evaluation.c_grid values must be positive".into()));
        }
        if e.permutations == 0 || e.two_stage_k == 0 || self.type_prediction.k == 0 {
            return Err(Error::Config("permutations and k values must be >= 1".into()));
        }
        if !(self.type_prediction.bn_mu > 0.0 && self.type_prediction.bn_mu < 1.0) {
            return Err(Error::Config("type_prediction.bn_mu must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// One seed for training, fold splits and permutation tests.
    pub fn set_seed(&mut self, seed: u64) {
        self.training.seed = seed;
        self.evaluation.fold_seed = seed;
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            theta: self.retrieval.theta,
            gen: self.generative,
            entity_prior: self.entity_prior,
            disc: self.training.clone(),
            folds: self.evaluation.folds,
            fold_seed: self.evaluation.fold_seed,
            c_grid: self.evaluation.c_grid.clone(),
            inner_folds: self.evaluation.inner_folds,
        }
    }

    pub fn require(slot: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        slot.clone()
            .ok_or_else(|| Error::Config(format!("paths.{key} is not set")))
    }
}
