//! Command-line front end.
//!
//! Subcommands:
//! - `run <config.toml> [--out FILE] [--seed N] [--trials N] [--epsilon X]
//!   [--c3 X]` — run an experiment; overrides replace the config values.
//! - `theory --gamma-db START:STEP:END --n N [--c3 X] [--out FILE]` —
//!   closed-form SER predictions on an inclusive dB grid, no simulation.
//! - `validate-config <config.toml>` — parse and check a config, run nothing.
//!
//! Exit codes: 0 success (including `--help`/`--version`), 1 for anything
//! wrong with the inputs (unknown flags, unreadable/invalid configs, bad
//! grid syntax), 2 for failures while running or writing results.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::csv::emit_csv;
use super::run::{run_experiment, theory_sweep_rows};
use super::HarnessError;

#[derive(Parser)]
#[command(
    name = "nomalink",
    version,
    about = "Uplink NOMA link-level simulator: blind GMM+SIC receiver, MLD baselines, SER theory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config and emit a result CSV.
    Run(RunArgs),
    /// Evaluate the closed-form SER predictor on an SNR grid (no trials).
    Theory(TheoryArgs),
    /// Parse and validate a config file without running anything.
    ValidateConfig {
        /// Path to the experiment config (TOML).
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (TOML).
    config: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the config's EM stopping threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the config's SER-predictor calibration constant.
    #[arg(long)]
    c3: Option<f64>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Inclusive SNR grid in dB, written START:STEP:END (e.g. 0:2:20).
    #[arg(long, value_name = "START:STEP:END")]
    gamma_db: String,
    /// Blocklength the predictor is evaluated at.
    #[arg(long)]
    n: usize,
    /// Calibration constant of the phase-mismatch term.
    #[arg(long, default_value_t = 0.005)]
    c3: f64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Expands `START:STEP:END` into an inclusive ascending grid.
fn parse_grid(text: &str) -> Result<Vec<f64>, HarnessError> {
    let invalid = |detail: String| HarnessError::InvalidConfig {
        field: "gamma-db",
        detail,
    };
    let parts: Vec<&str> = text.split(':').collect();
    let [start, step, end] = parts.as_slice() else {
        return Err(invalid(format!(
            "expected START:STEP:END, got {text:?}"
        )));
    };
    let parse = |label: &str, v: &str| {
        v.parse::<f64>()
            .map_err(|e| invalid(format!("{label} {v:?}: {e}")))
    };
    let start = parse("start", start)?;
    let step = parse("step", step)?;
    let end = parse("end", end)?;
    if !start.is_finite() || !step.is_finite() || !end.is_finite() {
        return Err(invalid("grid bounds must be finite".into()));
    }
    if !(step > 0.0) {
        return Err(invalid(format!("step must be positive, got {step}")));
    }
    if end < start {
        return Err(invalid(format!("end {end} below start {start}")));
    }
    // Half-open arithmetic with a relative guard so END lands on the grid
    // even after floating-point drift.
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn write_rows(
    rows: &[super::csv::ResultRow],
    out: Option<&Path>,
) -> Result<(), HarnessError> {
    match out {
        Some(path) => emit_csv(rows, File::create(path)?),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit_csv(rows, &mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(trials) = args.trials {
                cfg.trials = trials;
            }
            if let Some(epsilon) = args.epsilon {
                cfg.epsilon = epsilon;
            }
            if let Some(c3) = args.c3 {
                cfg.c3 = c3;
            }
            // Overrides can break invariants the file satisfied.
            cfg.validate()?;
            let rows = run_experiment(&cfg)?;
            write_rows(&rows, args.out.as_deref())
        }
        Command::Theory(args) => {
            let grid = parse_grid(&args.gamma_db)?;
            let rows = theory_sweep_rows(&grid, args.n, args.c3)?;
            write_rows(&rows, args.out.as_deref())
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!(
                "ok: {} ({} scenario, {} grid points, {} trials)",
                config.display(),
                cfg.scenario.name(),
                cfg.snr_db_grid.len(),
                cfg.trials
            );
            Ok(())
        }
    }
}

/// Entry point shared by the binary and the tests. `argv` must include the
/// program name in position 0 (as `std::env::args` does). Returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}
