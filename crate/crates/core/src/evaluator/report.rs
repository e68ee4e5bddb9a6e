use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, MetricsRow};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("format must be csv or json, got {other:?}")),
        }
    }
}

pub const CSV_HEADER: &str = "provider,scope,neurons,epochs,batch_size,dropout,accuracy,precision,recall,f1";

/// A metrics row as it appears in report files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub provider: String,
    pub scope: String,
    pub neurons: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    /// `None` for failed runs.
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Values are rounded to 6 decimals in both formats.
fn round6(v: f64) -> Option<f64> {
    v.is_finite().then(|| (v * 1e6).round() / 1e6)
}

impl From<&MetricsRow> for ReportRow {
    fn from(r: &MetricsRow) -> Self {
        ReportRow {
            provider: r.provider.clone(),
            scope: r.scope.to_string(),
            neurons: r.hyper.neurons,
            epochs: r.hyper.epochs,
            batch_size: r.hyper.batch_size,
            dropout: r.hyper.dropout,
            accuracy: round6(r.metrics.accuracy),
            precision: round6(r.metrics.precision),
            recall: round6(r.metrics.recall),
            f1: round6(r.metrics.f1),
            error: r.error.clone(),
        }
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn csv_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.6}"))
}

/// CSV or pretty JSON; failed runs show NaN in CSV and null in JSON.
pub fn write_report_rows<W: Write>(rows: &[ReportRow], format: ReportFormat, mut out: W) -> Result<(), EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{:.6},{},{},{},{}",
                    csv_field(&r.provider),
                    csv_field(&r.scope),
                    r.neurons,
                    r.epochs,
                    r.batch_size,
                    r.dropout,
                    csv_value(r.accuracy),
                    csv_value(r.precision),
                    csv_value(r.recall),
                    csv_value(r.f1)
                )?;
            }
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_report<W: Write>(rows: &[MetricsRow], format: ReportFormat, out: W) -> Result<(), EvalError> {
    let rows: Vec<ReportRow> = rows.iter().map(ReportRow::from).collect();
    write_report_rows(&rows, format, out)
}

pub fn emit_report(rows: &[MetricsRow], format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    write_report(rows, format, BufWriter::new(File::create(path)?))
}

/// Reads rows back from a JSON report.
pub fn read_report_json<R: Read>(input: R) -> Result<Vec<ReportRow>, EvalError> {
    serde_json::from_reader(input).map_err(|e| EvalError::ReportFormat(e.to_string()))
}
