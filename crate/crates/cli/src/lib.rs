//! Experiment driver behind the `jcas-lab` binary.
//!
//! Each subcommand reads an [`config::ExperimentConfig`], runs one analysis
//! from `jcas-core` and writes CSV files whose first line records the tool
//! version and provenance.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod figures;
pub mod output;

use jcas_core::Error;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status when writing output fails.
pub const EXIT_IO: i32 = 1;
/// Exit status for invalid configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical or convergence failures.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit status under `--strict` when some result is infeasible.
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} infeasible result(s) under --strict")]
    Infeasible(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                Error::Dimension(_)
                | Error::Parameter(_)
                | Error::Unsupported(_)
                | Error::Schema { .. }
                | Error::Capacity { .. } => EXIT_CONFIG,
                Error::Numerical { .. } | Error::Convergence { .. } | Error::Evidence { .. } => EXIT_NUMERICAL,
            },
            CliError::Io { .. } => EXIT_IO,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

/// Summary of one subcommand run.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<std::path::PathBuf>,
    /// Number of infeasible results reported.
    pub infeasible: usize,
}
