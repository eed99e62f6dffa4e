use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. `class()` gives a stable
/// machine-readable tag used by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: malformed record: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: cycle in subtype edges: {}", cycle.join(" -> "))]
    SubtypeCycle {
        file: String,
        line: usize,
        cycle: Vec<String>,
    },
    #[error("{file}:{line}: entity `{entity}` has no type")]
    EntityWithoutType {
        file: String,
        line: usize,
        entity: String,
    },
    #[error("{file}:{line}: type `{type_id}` has no lemma")]
    TypeWithoutLemma {
        file: String,
        line: usize,
        type_id: String,
    },
    #[error("{file}:{line}: reference to undeclared {what} `{id}`")]
    DanglingReference {
        file: String,
        line: usize,
        what: &'static str,
        id: String,
    },
    #[error("{file}:{line}: type `{type_id}` is not connected to the root type")]
    OrphanType {
        file: String,
        line: usize,
        type_id: String,
    },
    #[error("{file}: {message}")]
    BadRoot { file: String, message: String },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),

    #[error("{file}:{line}: mention span [{start}, {end}) invalid for document of {len} tokens")]
    SpanOutOfBounds {
        file: String,
        line: usize,
        start: u32,
        end: u32,
        len: usize,
    },
    #[error("{file}:{line}: mention spans [{first_start}, {first_end}) and [{second_start}, {second_end}) overlap")]
    OverlappingMentions {
        file: String,
        line: usize,
        first_start: u32,
        first_end: u32,
        second_start: u32,
        second_end: u32,
    },

    #[error("query is empty after tokenization")]
    EmptyQuery,
    #[error("query has {len} tokens, the cap is {cap}")]
    QueryTooLong { len: usize, cap: usize },
    #[error("switch vector has length {got}, query has {expected} words")]
    SwitchLengthMismatch { expected: usize, got: usize },
    #[error("WAND query has no terms")]
    EmptyWandQuery,

    #[error("index image: {0}")]
    IndexImage(String),
    #[error("index image version {found} does not match supported version {expected}")]
    IndexVersion { found: u32, expected: u32 },

    #[error("invalid hyperparameter: {0}")]
    HyperParam(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("model feature layout version {found} does not match engine layout version {expected}")]
    LayoutMismatch { found: u32, expected: u32 },
    #[error("lambda step did not converge after {iterations} sweeps (last objective {objective})")]
    NonConvergence { iterations: usize, objective: f64 },
    #[error("no usable training queries")]
    NoTrainingData,

    #[error("entity `{0}` has no snippets or types to score")]
    Unscorable(String),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("per-(type, switch) table was not retained for this score")]
    TableNotRetained,
    #[error("need at least {folds} queries for {folds}-fold cross validation, have {have}")]
    TooFewQueries { have: usize, folds: usize },
    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable error class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed_record",
            Error::SubtypeCycle { .. } => "subtype_cycle",
            Error::EntityWithoutType { .. } => "entity_without_type",
            Error::TypeWithoutLemma { .. } => "type_without_lemma",
            Error::DanglingReference { .. } => "dangling_reference",
            Error::OrphanType { .. } => "orphan_type",
            Error::BadRoot { .. } => "bad_root",
            Error::UnknownEntity(_) => "unknown_entity",
            Error::UnknownType(_) => "unknown_type",
            Error::SpanOutOfBounds { .. } => "span_out_of_bounds",
            Error::OverlappingMentions { .. } => "overlapping_mentions",
            Error::EmptyQuery => "empty_query",
            Error::QueryTooLong { .. } => "query_too_long",
            Error::SwitchLengthMismatch { .. } => "switch_length_mismatch",
            Error::EmptyWandQuery => "empty_wand_query",
            Error::IndexImage(_) => "index_image",
            Error::IndexVersion { .. } => "index_version",
            Error::HyperParam(_) => "hyperparameter",
            Error::ModelFormat(_) => "model_format",
            Error::LayoutMismatch { .. } => "layout_mismatch",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NoTrainingData => "no_training_data",
            Error::Unscorable(_) => "unscorable",
            Error::EmptyCandidates => "empty_candidates",
            Error::TableNotRetained => "table_not_retained",
            Error::TooFewQueries { .. } => "too_few_queries",
            Error::Config(_) => "config",
        }
    }
}
