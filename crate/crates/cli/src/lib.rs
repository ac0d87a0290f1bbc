//! Experiment runner: configuration, presets and the pipeline commands
//! behind the `casbi` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;

pub use commands::{metadata_line, Context};
pub use config::ExperimentConfig;

/// Commands driven by an [`ExperimentConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    CostFit,
    Diagnose,
    Sample,
    Abc,
    Export,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EMPTY_POSTERIOR: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Runs `command` on a thread pool of `cfg.workers` threads (all cores when unset).
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build()?;
    pool.install(|| {
        let ctx = Context::new(cfg)?;
        match command {
            Command::CostFit => commands::cmd_cost_fit(&ctx),
            Command::Diagnose => commands::cmd_diagnose(&ctx),
            Command::Sample => commands::cmd_sample(&ctx),
            Command::Abc => commands::cmd_abc(&ctx),
            Command::Export => commands::cmd_export(&ctx),
        }
    })
}

/// Process exit code for an error: 2 for configuration problems, 3 for an
/// empty posterior, 4 for an exhausted rejection budget, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<casbi::Error>() {
            return match e {
                casbi::Error::Config(_) | casbi::Error::Parse(_) | casbi::Error::DimensionMismatch { .. } => EXIT_CONFIG,
                casbi::Error::EmptyPosterior { .. } => EXIT_EMPTY_POSTERIOR,
                casbi::Error::BudgetExceeded { .. } => EXIT_BUDGET,
                _ => EXIT_FAILURE,
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return EXIT_CONFIG;
        }
    }
    EXIT_FAILURE
}
