//! Ranking metrics, runs, cross-validation and significance testing.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod runs;
pub mod significance;
pub mod tuning;

pub use experiment::{
    cross_validate, evaluate_fixed, excluded_queries, generative_grid, sweep_generative, Evaluation, ExperimentConfig,
};
pub use metrics::{aggregate, query_metrics, Aggregate, QueryMetrics};
pub use report::Report;
pub use runs::{render_runs, read_run_file, Engine, RankerKind, Run, RunEntry};
pub use significance::{paired_randomization_test, DEFAULT_PERMUTATIONS};
