//! Result rows and the fixed 15-column CSV layout.
//!
//! Columns, in order: `scenario, receiver, user_index, snr_db_user1,
//! snr_db_user2, snr_db_user3, n_symbols, pilot_count, trials, seed,
//! ser_empirical, ser_stderr, ser_theory, throughput, wall_ms`. Fields that
//! do not apply to a row (for example `throughput` outside grant-free, or
//! `ser_theory` where no closed form exists) are emitted as empty strings.
//! Floats are printed with ten significant digits (`{:.9e}`), which a
//! parse-back reproduces exactly: re-emitting parsed rows gives the same
//! bytes. Lines end with `\n`.
//!
//! Column semantics worth calling out:
//! - `user_index` is 1-based and ordered strongest first; empty for rows
//!   that aggregate over users (grant-free) or have no users (theory).
//! - grant-free rows use `ser_empirical`/`ser_stderr` for the
//!   activity-detection error rate — the fraction of trials where the
//!   detected user count differed from the true one — since per-user SER is
//!   not defined when the user set itself is estimated. `throughput` is the
//!   fraction of all transmitted symbols (pilots included in the
//!   denominator) that were detected correctly.
//! - `wall_ms` is the total time a receiver spent across all trials of the
//!   row's grid point; it is measured, so it is exempt from the
//!   byte-determinism guarantee that covers every other column.

use std::io::Write;

use super::HarnessError;

/// Header line of the result CSV (no trailing newline).
pub const CSV_HEADER: &str = "scenario,receiver,user_index,snr_db_user1,snr_db_user2,snr_db_user3,n_symbols,pilot_count,trials,seed,ser_empirical,ser_stderr,ser_theory,throughput,wall_ms";

/// One aggregated experiment result: a (grid point, receiver, user) cell.
///
/// `None` fields mean "not defined for this row" and emit as empty CSV
/// fields. Rates (`ser_empirical`, `ser_theory`, `throughput`) must lie in
/// [0, 1]; `ser_stderr` must be non-negative. [`ResultRow::validate`]
/// enforces this and [`render_csv`] refuses rows that violate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub receiver: String,
    pub user_index: Option<usize>,
    pub snr_db_user1: Option<f64>,
    pub snr_db_user2: Option<f64>,
    pub snr_db_user3: Option<f64>,
    pub n_symbols: Option<usize>,
    pub pilot_count: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub ser_empirical: Option<f64>,
    pub ser_stderr: Option<f64>,
    pub ser_theory: Option<f64>,
    pub throughput: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl ResultRow {
    /// An all-empty row with just the identifying labels, for builders to
    /// fill in.
    pub fn labeled(scenario: &str, receiver: &str) -> Self {
        ResultRow {
            scenario: scenario.to_string(),
            receiver: receiver.to_string(),
            user_index: None,
            snr_db_user1: None,
            snr_db_user2: None,
            snr_db_user3: None,
            n_symbols: None,
            pilot_count: None,
            trials: None,
            seed: None,
            ser_empirical: None,
            ser_stderr: None,
            ser_theory: None,
            throughput: None,
            wall_ms: None,
        }
    }

    /// Checks the range invariants: rates in [0, 1], stderr and wall time
    /// non-negative, labels non-empty and comma-free.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::InvalidRow(msg));
        for (name, label) in [("scenario", &self.scenario), ("receiver", &self.receiver)] {
            if label.is_empty() || label.contains(',') || label.contains('\n') {
                return bad(format!("{name} label {label:?} is empty or not CSV-safe"));
            }
        }
        for (name, value) in [
            ("ser_empirical", self.ser_empirical),
            ("ser_theory", self.ser_theory),
            ("throughput", self.throughput),
        ] {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("{name} = {v} outside [0, 1]"));
                }
            }
        }
        for (name, value) in [("ser_stderr", self.ser_stderr), ("wall_ms", self.wall_ms)] {
            if let Some(v) = value {
                if !(v >= 0.0) || !v.is_finite() {
                    return bad(format!("{name} = {v} must be finite and non-negative"));
                }
            }
        }
        for (name, value) in [
            ("snr_db_user1", self.snr_db_user1),
            ("snr_db_user2", self.snr_db_user2),
            ("snr_db_user3", self.snr_db_user3),
        ] {
            if let Some(v) = value {
                if !v.is_finite() {
                    return bad(format!("{name} = {v} must be finite"));
                }
            }
        }
        Ok(())
    }
}

fn float_field(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.9e}")).unwrap_or_default()
}

fn int_field<T: ToString>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn format_row(row: &ResultRow) -> String {
    [
        row.scenario.clone(),
        row.receiver.clone(),
        int_field(row.user_index),
        float_field(row.snr_db_user1),
        float_field(row.snr_db_user2),
        float_field(row.snr_db_user3),
        int_field(row.n_symbols),
        int_field(row.pilot_count),
        int_field(row.trials),
        int_field(row.seed),
        float_field(row.ser_empirical),
        float_field(row.ser_stderr),
        float_field(row.ser_theory),
        float_field(row.throughput),
        float_field(row.wall_ms),
    ]
    .join(",")
}

/// Renders header + rows to a CSV string (LF line endings, trailing newline).
pub fn render_csv(rows: &[ResultRow]) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyRows);
    }
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        row.validate()?;
        out.push_str(&format_row(row));
        out.push('\n');
    }
    Ok(out)
}

/// Writes [`render_csv`] output to `destination`.
pub fn emit_csv<W: Write>(rows: &[ResultRow], mut destination: W) -> Result<(), HarnessError> {
    let text = render_csv(rows)?;
    destination.write_all(text.as_bytes())?;
    Ok(())
}

fn parse_float(field: &str, name: &'static str, line: usize) -> Result<Option<f64>, HarnessError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|e| HarnessError::CsvParse {
            line,
            detail: format!("{name}: {e}"),
        })
}

fn parse_int<T: std::str::FromStr>(
    field: &str,
    name: &'static str,
    line: usize,
) -> Result<Option<T>, HarnessError>
where
    T::Err: std::fmt::Display,
{
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<T>()
        .map(Some)
        .map_err(|e| HarnessError::CsvParse {
            line,
            detail: format!("{name}: {e}"),
        })
}

/// Parses a document produced by [`render_csv`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(HarnessError::CsvParse {
                line: 1,
                detail: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(HarnessError::CsvParse {
                line: 1,
                detail: "empty document".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (index, text_line) in lines {
        let line = index + 1;
        let fields: Vec<&str> = text_line.split(',').collect();
        if fields.len() != 15 {
            return Err(HarnessError::CsvParse {
                line,
                detail: format!("expected 15 fields, got {}", fields.len()),
            });
        }
        rows.push(ResultRow {
            scenario: fields[0].to_string(),
            receiver: fields[1].to_string(),
            user_index: parse_int(fields[2], "user_index", line)?,
            snr_db_user1: parse_float(fields[3], "snr_db_user1", line)?,
            snr_db_user2: parse_float(fields[4], "snr_db_user2", line)?,
            snr_db_user3: parse_float(fields[5], "snr_db_user3", line)?,
            n_symbols: parse_int(fields[6], "n_symbols", line)?,
            pilot_count: parse_int(fields[7], "pilot_count", line)?,
            trials: parse_int(fields[8], "trials", line)?,
            seed: parse_int(fields[9], "seed", line)?,
            ser_empirical: parse_float(fields[10], "ser_empirical", line)?,
            ser_stderr: parse_float(fields[11], "ser_stderr", line)?,
            ser_theory: parse_float(fields[12], "ser_theory", line)?,
            throughput: parse_float(fields[13], "throughput", line)?,
            wall_ms: parse_float(fields[14], "wall_ms", line)?,
        });
    }
    Ok(rows)
}
