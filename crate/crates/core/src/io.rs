//! Ingestion of historical test summaries and serialization of reports.
//!
//! Input is UTF-8 CSV with the header `test_id,delta_hat,tau_sq` and one row
//! per test. Row numbers in diagnostics are file line numbers, so the first
//! data row is row 2.
//!
//! JSON is the canonical output. Reals are written in their shortest
//! round-trip form, so parsing the output gives back the same bits. CSV output
//! has fixed columns per table, listed on each `*_CSV_COLUMNS` constant.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{ComparisonReport, PerformanceReport};
use crate::harness::{AlphaSweepRow, ReplicationMetrics, SizeSweepRow};
use crate::model::TestSummary;

pub const INPUT_COLUMNS: [&str; 3] = ["test_id", "delta_hat", "tau_sq"];
pub const REPORT_CSV_COLUMNS: [&str; 10] = [
    "theta_hat",
    "zeta_sq_hat",
    "ci_low",
    "ci_high",
    "level",
    "num_tests",
    "alpha",
    "num_partitions",
    "measure",
    "methodology",
];
pub const COMPARISON_CSV_COLUMNS: [&str; 14] = [
    "methodology_1",
    "methodology_2",
    "measure",
    "alpha",
    "num_partitions",
    "num_tests",
    "level",
    "theta_hat_1",
    "ci_low_1",
    "ci_high_1",
    "theta_hat_2",
    "ci_low_2",
    "ci_high_2",
    "relative_difference",
];
pub const REPLICATION_CSV_COLUMNS: [&str; 10] = [
    "replication",
    "theta_hat_1",
    "theta_hat_2",
    "comparison",
    "ci_low_1",
    "ci_high_1",
    "ci_low_2",
    "ci_high_2",
    "covers_1",
    "covers_2",
];
pub const ALPHA_SWEEP_CSV_COLUMNS: [&str; 4] = ["alpha", "bias_sq_vs_ideal", "variance", "mse"];
pub const SIZE_SWEEP_CSV_COLUMNS: [&str; 4] =
    ["num_tests", "num_partitions", "variance", "variance_se"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

/// Reads test summaries from a CSV file.
pub fn ingest_summaries(path: impl AsRef<Path>) -> Result<Vec<TestSummary>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_summaries(BufReader::new(file))
}

/// Reads test summaries from any CSV source.
pub fn read_summaries<R: Read>(reader: R) -> Result<Vec<TestSummary>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut records = csv.records();

    let header = match records.next() {
        None => {
            return Err(Error::Parse {
                row: 1,
                message: "empty input, expected header `test_id,delta_hat,tau_sq`".into(),
            })
        }
        Some(r) => r.map_err(|e| csv_error(1, e))?,
    };
    let header_fields: Vec<&str> = header.iter().collect();
    let expected: Vec<&str> = INPUT_COLUMNS.to_vec();
    let header_ok = header_fields.len() == 3
        && header_fields[0].trim_start_matches('\u{feff}') == expected[0]
        && header_fields[1..] == expected[1..];
    if !header_ok {
        return Err(Error::Parse {
            row: line_of(&header, 1),
            message: format!(
                "expected header `{}`, found `{}`",
                INPUT_COLUMNS.join(","),
                header_fields.join(",")
            ),
        });
    }

    let mut tests = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (k, record) in records.enumerate() {
        let fallback = k + 2;
        let record = record.map_err(|e| csv_error(fallback, e))?;
        let row = line_of(&record, fallback);
        if record.len() != 3 {
            return Err(Error::Parse {
                row,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let test_id = record[0].to_string();
        if test_id.is_empty() {
            return Err(Error::Parse {
                row,
                message: "test_id is empty".into(),
            });
        }
        let delta_hat = parse_real(&record[1], "delta_hat", row)?;
        if !delta_hat.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("delta_hat must be finite, got {delta_hat}"),
            });
        }
        let tau_sq = parse_real(&record[2], "tau_sq", row)?;
        if !(tau_sq > 0.0 && tau_sq.is_finite()) {
            return Err(Error::RowNonPositiveVariance { row, value: tau_sq });
        }
        if seen.insert(test_id.clone(), row).is_some() {
            return Err(Error::DuplicateTestId { test_id, row });
        }
        tests.push(TestSummary {
            test_id,
            delta_hat,
            tau_sq,
            true_delta: None,
        });
    }
    if tests.is_empty() {
        return Err(Error::Parse {
            row: 2,
            message: "no data rows".into(),
        });
    }
    Ok(tests)
}

fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

fn csv_error(fallback: usize, e: csv::Error) -> Error {
    let row = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback);
    Error::Parse {
        row,
        message: e.to_string(),
    }
}

fn parse_real(field: &str, name: &str, row: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("{name} `{field}` is not a number"),
    })
}

/// Writes summaries in the input format.
pub fn write_summaries<W: Write>(tests: &[TestSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INPUT_COLUMNS).map_err(ser_error)?;
    for t in tests {
        w.write_record([t.test_id.clone(), t.delta_hat.to_string(), t.tau_sq.to_string()])
            .map_err(ser_error)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

fn ser_error(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_table(columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns).map_err(ser_error)?;
    for row in rows {
        w.write_record(&row).map_err(ser_error)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

fn real(x: f64) -> String {
    x.to_string()
}

/// A result that can be written as JSON or as a CSV table.
pub trait Emit {
    fn to_json(&self) -> Result<String>;
    fn to_csv(&self) -> Result<String>;

    fn emit(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }
}

impl Emit for PerformanceReport {
    fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    fn to_csv(&self) -> Result<String> {
        csv_table(
            &REPORT_CSV_COLUMNS,
            [vec![
                real(self.theta_hat),
                real(self.zeta_sq_hat),
                real(self.ci_low),
                real(self.ci_high),
                real(self.level),
                self.num_tests.to_string(),
                real(self.alpha),
                self.num_partitions.to_string(),
                self.measure.to_string(),
                self.methodology.clone(),
            ]],
        )
    }
}

impl Emit for ComparisonReport {
    fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    fn to_csv(&self) -> Result<String> {
        let (r1, r2) = (&self.report_1, &self.report_2);
        csv_table(
            &COMPARISON_CSV_COLUMNS,
            [vec![
                r1.methodology.clone(),
                r2.methodology.clone(),
                r1.measure.to_string(),
                real(r1.alpha),
                r1.num_partitions.to_string(),
                r1.num_tests.to_string(),
                real(r1.level),
                real(self.theta_hat_1),
                real(r1.ci_low),
                real(r1.ci_high),
                real(self.theta_hat_2),
                real(r2.ci_low),
                real(r2.ci_high),
                real(self.relative_difference),
            ]],
        )
    }
}

impl Emit for ReplicationMetrics {
    fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// One row per replication.
    fn to_csv(&self) -> Result<String> {
        csv_table(
            &REPLICATION_CSV_COLUMNS,
            self.replications.iter().map(|r| {
                vec![
                    r.replication.to_string(),
                    real(r.theta_hat_1),
                    real(r.theta_hat_2),
                    real(r.comparison),
                    real(r.ci_low_1),
                    real(r.ci_high_1),
                    real(r.ci_low_2),
                    real(r.ci_high_2),
                    r.covers_1.to_string(),
                    r.covers_2.to_string(),
                ]
            }),
        )
    }
}

impl Emit for [AlphaSweepRow] {
    fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    fn to_csv(&self) -> Result<String> {
        csv_table(
            &ALPHA_SWEEP_CSV_COLUMNS,
            self.iter().map(|r| {
                vec![
                    real(r.alpha),
                    real(r.bias_sq_vs_ideal),
                    real(r.variance),
                    real(r.mse),
                ]
            }),
        )
    }
}

impl Emit for [SizeSweepRow] {
    fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    fn to_csv(&self) -> Result<String> {
        csv_table(
            &SIZE_SWEEP_CSV_COLUMNS,
            self.iter().map(|r| {
                vec![
                    r.num_tests.to_string(),
                    r.num_partitions.to_string(),
                    real(r.variance),
                    real(r.variance_se),
                ]
            }),
        )
    }
}

/// Writes `contents` to `path`, or to stdout when `path` is `None`.
pub fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}
