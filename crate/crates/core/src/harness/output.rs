//! CSV and JSON-lines persistence with fixed column schemas.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which round-trips
//! every `f64`; missing values are empty fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::diagnostics::LemmaCheckReport;
use crate::record::{Method, RunRecord};

pub const RECORD_COLUMNS: [&str; 8] = [
    "method",
    "seed",
    "t",
    "grad_norm",
    "cosine",
    "outlier_log_ratio",
    "clipped_fraction",
    "queries",
];
pub const SUMMARY_COLUMNS: [&str; 9] = [
    "cell_id",
    "method",
    "d",
    "p",
    "M",
    "median_final",
    "success_rate",
    "median_cosine",
    "total_queries",
];
pub const CHECK_COLUMNS: [&str; 6] = ["lemma_id", "empirical_lhs", "bound_rhs", "n_samples", "passed", "margin"];

/// Output encoding selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            other => Err(format!("unknown format {other:?} (csv or jsonl)")),
        }
    }
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell_id: String,
    pub method: Method,
    pub d: usize,
    pub p: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub median_final: f64,
    pub success_rate: f64,
    pub median_cosine: Option<f64>,
    pub total_queries: u64,
}

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn parse_real(s: &str, col: &str) -> Result<f64> {
    s.parse().with_context(|| format!("column {col}: bad real {s:?}"))
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_real(s, col).map(Some)
    }
}

fn parse_int<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
    s.parse().map_err(|_| anyhow::anyhow!("column {col}: bad integer {s:?}"))
}

fn record_fields(r: &RunRecord) -> [String; 8] {
    [
        r.method.as_str().to_string(),
        r.seed.to_string(),
        r.t.to_string(),
        fmt_real(r.grad_norm),
        fmt_opt(r.cosine),
        fmt_opt(r.outlier_log_ratio),
        fmt_real(r.clipped_fraction),
        r.queries.to_string(),
    ]
}

fn summary_fields(r: &SummaryRow) -> [String; 9] {
    [
        r.cell_id.clone(),
        r.method.as_str().to_string(),
        r.d.to_string(),
        fmt_real(r.p),
        r.m.to_string(),
        fmt_real(r.median_final),
        fmt_real(r.success_rate),
        fmt_opt(r.median_cosine),
        r.total_queries.to_string(),
    ]
}

fn check_fields(r: &LemmaCheckReport) -> [String; 6] {
    [
        r.lemma_id.clone(),
        fmt_real(r.empirical_lhs),
        fmt_real(r.bound_rhs),
        r.n_samples.to_string(),
        r.passed.to_string(),
        fmt_real(r.margin),
    ]
}

fn write_csv<const N: usize>(w: impl Write, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn read_csv<const N: usize>(text: &str, header: [&str; N]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header {
        bail!("unexpected columns {got:?}, expected {header:?}");
    }
    rdr.records().map(|r| r.map_err(Into::into)).collect()
}

/// Writes records sorted by `(method, seed, t)`.
pub fn records_to_csv(records: &[RunRecord], w: impl Write) -> Result<()> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.method, r.seed, r.t));
    write_csv(w, RECORD_COLUMNS, sorted.into_iter().map(record_fields))
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>> {
    read_csv(text, RECORD_COLUMNS)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let f = |k: usize| row.get(k).unwrap_or("");
            Ok::<_, anyhow::Error>(RunRecord {
                method: f(0).parse().map_err(|e: String| anyhow::anyhow!(e))?,
                seed: parse_int(f(1), "seed")?,
                t: parse_int(f(2), "t")?,
                grad_norm: parse_real(f(3), "grad_norm")?,
                cosine: parse_opt(f(4), "cosine")?,
                outlier_log_ratio: parse_opt(f(5), "outlier_log_ratio")?,
                clipped_fraction: parse_real(f(6), "clipped_fraction")?,
                queries: parse_int(f(7), "queries")?,
            })
            .with_context(|| format!("records row {}", i + 1))
        })
        .collect()
}

/// Writes summary rows sorted by `(cell_id, method)`.
pub fn summary_to_csv(rows: &[SummaryRow], w: impl Write) -> Result<()> {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.cell_id, a.method).cmp(&(&b.cell_id, b.method)));
    write_csv(w, SUMMARY_COLUMNS, sorted.into_iter().map(summary_fields))
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    read_csv(text, SUMMARY_COLUMNS)?
        .iter()
        .map(|row| {
            let f = |k: usize| row.get(k).unwrap_or("");
            Ok(SummaryRow {
                cell_id: f(0).to_string(),
                method: f(1).parse().map_err(|e: String| anyhow::anyhow!(e))?,
                d: parse_int(f(2), "d")?,
                p: parse_real(f(3), "p")?,
                m: parse_int(f(4), "M")?,
                median_final: parse_real(f(5), "median_final")?,
                success_rate: parse_real(f(6), "success_rate")?,
                median_cosine: parse_opt(f(7), "median_cosine")?,
                total_queries: parse_int(f(8), "total_queries")?,
            })
        })
        .collect()
}

/// Writes check reports in the given order.
pub fn checks_to_csv(rows: &[LemmaCheckReport], w: impl Write) -> Result<()> {
    write_csv(w, CHECK_COLUMNS, rows.iter().map(check_fields))
}

pub fn parse_checks_csv(text: &str) -> Result<Vec<LemmaCheckReport>> {
    read_csv(text, CHECK_COLUMNS)?
        .iter()
        .map(|row| {
            let f = |k: usize| row.get(k).unwrap_or("");
            Ok(LemmaCheckReport {
                lemma_id: f(0).to_string(),
                empirical_lhs: parse_real(f(1), "empirical_lhs")?,
                bound_rhs: parse_real(f(2), "bound_rhs")?,
                n_samples: parse_int(f(3), "n_samples")?,
                passed: parse_int(f(4), "passed")?,
                margin: parse_real(f(5), "margin")?,
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(rows: impl Iterator<Item = T>, mut w: impl Write) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Writes `records.<ext>` into `dir`; returns the path.
pub fn emit_records(records: &[RunRecord], dir: &Path, format: OutputFormat) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("records.{}", format.extension()));
    let w = create(&path)?;
    match format {
        OutputFormat::Csv => records_to_csv(records, w),
        OutputFormat::Jsonl => {
            let mut sorted: Vec<&RunRecord> = records.iter().collect();
            sorted.sort_by_key(|r| (r.method, r.seed, r.t));
            write_jsonl(sorted.into_iter(), w)
        }
    }
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn emit_summary(rows: &[SummaryRow], dir: &Path, format: OutputFormat) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("summary.{}", format.extension()));
    let w = create(&path)?;
    match format {
        OutputFormat::Csv => summary_to_csv(rows, w),
        OutputFormat::Jsonl => {
            let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
            sorted.sort_by(|a, b| (&a.cell_id, a.method).cmp(&(&b.cell_id, b.method)));
            write_jsonl(sorted.into_iter(), w)
        }
    }
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn emit_checks(rows: &[LemmaCheckReport], dir: &Path, format: OutputFormat) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("checks.{}", format.extension()));
    let w = create(&path)?;
    match format {
        OutputFormat::Csv => checks_to_csv(rows, w),
        OutputFormat::Jsonl => write_jsonl(rows.iter(), w),
    }
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes any text artifact, creating parent directories.
pub fn emit_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}
