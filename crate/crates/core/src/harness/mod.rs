//! Monte Carlo experiment harness: scenario configs, seeded trial farms,
//! SER/throughput aggregation, theory overlays, CSV emission, and the CLI.
//!
//! An experiment is described by a flat TOML file ([`ExperimentConfig`]),
//! expanded by [`run_experiment`] into one [`ResultRow`] per (grid point,
//! receiver, user), and written by [`emit_csv`] with a fixed 15-column
//! layout. Identical config + seed gives bit-identical rows: every trial
//! draws from its own counter-derived RNG stream and aggregation is
//! order-free (integer error counts), so the rows do not depend on how the
//! worker pool schedules trials. Wall-clock columns are measured, not
//! derived, and are the one exception to byte-stability.

mod cli;
mod config;
mod csv;
mod run;

pub use cli::cli_main;
pub use config::{ExperimentConfig, Scenario};
pub use csv::{emit_csv, parse_csv, render_csv, ResultRow, CSV_HEADER};
pub use run::{run_experiment, theory_sweep_rows};

use thiserror::Error;

/// Errors from configuration handling, experiment execution, or CSV I/O.
///
/// [`HarnessError::is_config_error`] separates "the inputs were bad" from
/// "the run itself failed", which the CLI maps to exit codes 1 and 2.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The config file could not be read.
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The config file is not valid TOML or has unknown/ill-typed keys.
    #[error("invalid config syntax: {0}")]
    ConfigSyntax(#[from] toml::de::Error),
    /// The config parsed but violates an invariant.
    #[error("invalid config: {field}: {detail}")]
    InvalidConfig { field: &'static str, detail: String },
    /// CSV emission was asked to write zero rows.
    #[error("no result rows to emit")]
    EmptyRows,
    /// A row violates a range invariant (rates must lie in [0, 1]).
    #[error("invalid result row: {0}")]
    InvalidRow(String),
    /// A CSV document being parsed back does not match the expected layout.
    #[error("CSV parse error on line {line}: {detail}")]
    CsvParse { line: usize, detail: String },
    /// Output could not be written.
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    /// A trial failed inside a detector.
    #[error(transparent)]
    Receiver(#[from] crate::receiver::ReceiverError),
    /// A trial failed while drawing channels or transmitting.
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    /// A theory predictor rejected its parameters.
    #[error(transparent)]
    Theory(#[from] crate::theory::TheoryError),
}

impl HarnessError {
    /// True for errors the user can fix in the config file or CLI arguments;
    /// false for failures at run time.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::ConfigRead { .. }
                | HarnessError::ConfigSyntax(_)
                | HarnessError::InvalidConfig { .. }
        )
    }
}
