//! `ter`: build indexes, rank, train, evaluate and predict types from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

#[derive(Parser, Debug)]
#[command(name = "ter", version, about = "Typed entity ranking with joint query interpretation")]
struct Cli {
    /// TOML configuration file; relative paths inside it resolve against
    /// its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set training.c=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for training, fold splits and permutation tests. Falls back to
    /// `TER_SEED`, then to the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Index the corpus and write the index image.
    BuildIndex {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank entities for one query.
    Search {
        #[arg(long, short)]
        query: String,
        /// Target type for the perfect ranker.
        #[arg(long = "type")]
        type_id: Option<String>,
        #[arg(long, default_value = "discriminative")]
        ranker: String,
        /// Rows printed.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the discriminative model on the judged queries.
    Train {
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Cross-validate (or, with `--model`, apply) one ranker and write
    /// `report.tsv` and `runs.tsv`.
    Evaluate {
        #[arg(long, default_value = "discriminative")]
        ranker: String,
        /// Run file of a baseline for the paired comparison.
        #[arg(long)]
        baseline_run: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fixed model instead of cross-validated training.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pick α, β, γ, δ by cross-validated MAP over powers of ten first.
        #[arg(long)]
        sweep_generative: bool,
    },
    /// Rank target types for one query, or for every configured query.
    PredictType {
        #[arg(long, short)]
        query: Option<String>,
        #[arg(long, default_value = "ours")]
        method: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Best interpretation of a query for one entity.
    Explain {
        #[arg(long, short)]
        query: String,
        #[arg(long)]
        entity: String,
        #[arg(long, default_value = "discriminative")]
        ranker: String,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write a generated benchmark.
    Synth {
        #[arg(long, default_value = "toy")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn seed_from_env() -> ter_core::Result<Option<u64>> {
    match std::env::var("TER_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ter_core::Error::Config(format!("TER_SEED `{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> ter_core::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ter_core::Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ter_core::Error::Config(format!("thread pool: {e}")))?;
    }
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => seed_from_env()?,
    };
    if let Command::Synth { preset, out } = &cli.command {
        return commands::synth(preset, out, seed);
    }
    let mut cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::BuildIndex { out: path } => commands::build_index(&cfg, path),
        Command::Search {
            query,
            type_id,
            ranker,
            k,
            model,
        } => commands::search(&cfg, &query, type_id.as_deref(), &ranker, k, model, &mut out),
        Command::Train { model_out, log_out } => commands::train(&cfg, model_out, log_out),
        Command::Evaluate {
            ranker,
            baseline_run,
            out: dir,
            model,
            sweep_generative,
        } => commands::evaluate(&cfg, &ranker, baseline_run, dir, model, sweep_generative, &mut out),
        Command::PredictType { query, method, k, model } => {
            commands::predict_type(&cfg, query.as_deref(), &method, k, model, &mut out)
        }
        Command::Explain {
            query,
            entity,
            ranker,
            model,
        } => commands::explain(&cfg, &query, &entity, &ranker, model, &mut out),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\t'], " ");
            eprintln!("error\t{}\t{}", e.class(), msg);
            ExitCode::from(2)
        }
    }
}
