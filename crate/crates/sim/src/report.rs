//! Rendering and parsing of metrics reports.
//!
//! Three formats cover the three consumers:
//!
//! * `table-text` — a fixed-width table for terminals, with Abias, MSE,
//!   and ESE scaled to units of `1e-3` as in the study tables;
//! * `csv` — one row per method with full-precision decimal values;
//!   emitting and re-parsing reproduces the rows bit for bit;
//! * `json` — the [`MetricsRow`] array serialized verbatim, matching
//!   `schemas/metrics-report.schema.json`.
//!
//! Metrics that could not be computed (an empty intersection pool)
//! render as `NA` in the text formats and `null` in JSON.

use std::fmt;
use std::str::FromStr;

use crate::harness::{MethodId, MetricsRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Csv,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [
        ReportFormat::TableText,
        ReportFormat::Csv,
        ReportFormat::Json,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportFormat::TableText => "table-text",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table-text" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Report(format!(
                "unknown format '{other}' (expected table-text, csv, or json)"
            ))),
        }
    }
}

/// Render rows in the requested format.
pub fn emit_report(rows: &[MetricsRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::TableText => Ok(emit_table_text(rows)),
        ReportFormat::Csv => Ok(emit_csv(rows)),
        ReportFormat::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
    }
}

fn fmt_scaled(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.0}", v * 1e3),
        None => "NA".to_string(),
    }
}

fn emit_table_text(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>12}\n",
        "method", "fails%", "cp%", "abias", "mse", "ese", "converged"
    ));
    for row in rows {
        let cp = row.cp_pct.map_or("NA".to_string(), |v| format!("{v:.1}"));
        out.push_str(&format!(
            "{:<8} {:>8.2} {:>7} {:>7} {:>7} {:>7} {:>12}\n",
            row.method.registry_name(),
            row.fails_pct,
            cp,
            fmt_scaled(row.abias),
            fmt_scaled(row.mse),
            fmt_scaled(row.ese),
            format!("{}/{}", row.n_converged, row.n_reps),
        ));
    }
    out.push_str("(abias, mse, ese in units of 1e-3)\n");
    out
}

const CSV_HEADER: &str = "method,fails_pct,cp_pct,abias,mse,ese,n_reps,n_converged";

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

fn emit_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.method.registry_name(),
            row.fails_pct,
            fmt_opt(row.cp_pct),
            fmt_opt(row.abias),
            fmt_opt(row.mse),
            fmt_opt(row.ese),
            row.n_reps,
            row.n_converged,
        ));
    }
    out
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field == "NA" {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Report(format!("line {line}: bad number '{field}': {e}")))
}

/// Parse a report produced by [`emit_report`] with [`ReportFormat::Csv`].
///
/// Exact inverse of the emitter: values re-parse to the original bits.
pub fn parse_csv_report(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Report(format!(
                "unexpected header '{header}' (expected '{CSV_HEADER}')"
            )))
        }
        None => return Err(Error::Report("empty report".into())),
    }
    let mut rows = Vec::new();
    for (index, line) in lines {
        if line.is_empty() {
            continue;
        }
        let number = index + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Report(format!(
                "line {number}: expected 8 fields, got {}",
                fields.len()
            )));
        }
        let method = MethodId::from_str(fields[0])?;
        let fails_pct = fields[1]
            .parse::<f64>()
            .map_err(|e| Error::Report(format!("line {number}: bad fails_pct: {e}")))?;
        let parse_count = |field: &str, name: &str| -> Result<usize> {
            field
                .parse::<usize>()
                .map_err(|e| Error::Report(format!("line {number}: bad {name}: {e}")))
        };
        rows.push(MetricsRow {
            method,
            fails_pct,
            cp_pct: parse_opt(fields[2], number)?,
            abias: parse_opt(fields[3], number)?,
            mse: parse_opt(fields[4], number)?,
            ese: parse_opt(fields[5], number)?,
            n_reps: parse_count(fields[6], "n_reps")?,
            n_converged: parse_count(fields[7], "n_converged")?,
        });
    }
    Ok(rows)
}

/// Parse a report produced by [`emit_report`] with [`ReportFormat::Json`].
pub fn parse_json_report(text: &str) -> Result<Vec<MetricsRow>> {
    Ok(serde_json::from_str(text)?)
}
