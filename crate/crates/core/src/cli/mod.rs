//! Configuration ingestion, experiment orchestration, persistence and plot-table emission.
//!
//! Exit codes: 0 success (including runs whose only non-pass outcome is divergence),
//! 1 I/O failure, 2 malformed or invalid configuration, 3 numeric failure.

mod commands;
mod config;
mod plotdata;
mod suite;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run_cli, Cli};
pub use config::*;
pub use plotdata::{emit_plotdata, PLOT_DIR};
pub use suite::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Overrides the output directory of every subcommand.
pub const ENV_OUT: &str = "FRACSPEC_OUT";
/// Size of the worker pool.
pub const ENV_THREADS: &str = "FRACSPEC_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration ({origin}): {message}")]
    Schema { origin: String, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing results in {}: expected {}", dir.display(), expected.join(", "))]
    MissingResults { dir: PathBuf, expected: Vec<String> },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Json(serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => EXIT_SCHEMA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::MissingResults { .. } | CliError::Io { .. } | CliError::Csv { .. } | CliError::Json(_) => EXIT_IO,
        }
    }
}
