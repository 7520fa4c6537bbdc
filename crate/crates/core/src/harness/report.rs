//! Writing experiment results to an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Result;

use super::config::ExperimentConfig;
use super::experiment::{
    probe_for, tune_and_evaluate, CellOutcome, ExperimentCache, MomentumReport, SeedAudit, SeedFinals, Selection,
    TuneOutcome,
};
use super::output::{emit_records, emit_summary, emit_text, fmt_real, OutputFormat, SummaryRow};
use super::plot::emit_plotdata;
use crate::diagnostics::ProbeResult;

pub fn tune_text(tune: &TuneOutcome) -> String {
    let mut s = String::from("method,alpha,threshold,median_final,selected\n");
    for score in &tune.scores {
        let selected = tune.selections.get(&score.cell.method).and_then(Selection::cell) == Some(score.cell);
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            score.cell.method,
            fmt_real(score.cell.alpha),
            score.cell.threshold.map(fmt_real).unwrap_or_default(),
            fmt_real(score.median_final),
            selected
        );
    }
    s
}

pub fn probe_text(probe: &ProbeResult) -> String {
    let mut s = String::from("point,raw,vector_clip,scalar_clip\n");
    for i in 0..probe.raw.len() {
        let _ = writeln!(
            s,
            "{i},{},{},{}",
            fmt_real(probe.raw[i]),
            fmt_real(probe.vector_clip[i]),
            fmt_real(probe.scalar_clip[i])
        );
    }
    s
}

pub struct RepresentativeReport {
    pub outcome: Arc<CellOutcome>,
    pub probe: Option<ProbeResult>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Tunes, evaluates and writes records, summary, tuning table, probe
/// cosines and plot data under `dir`.
pub fn run_representative(
    cfg: &ExperimentConfig,
    dir: &Path,
    format: OutputFormat,
    audit: &SeedAudit,
    cache: Option<&ExperimentCache>,
) -> Result<RepresentativeReport> {
    std::fs::create_dir_all(dir)?;
    let outcome = tune_and_evaluate(cfg, audit, cache)?;
    let probe = probe_for(cfg, &outcome.tune)?;
    let mut files = vec![
        emit_records(&outcome.evaluation.records, dir, format)?,
        emit_summary(&outcome.summary_rows(), dir, format)?,
    ];
    for (name, text) in [("config.txt", cfg.to_text()), ("tune.csv", tune_text(&outcome.tune))] {
        let path = dir.join(name);
        emit_text(&path, &text)?;
        files.push(path);
    }
    if let Some(p) = &probe {
        let path = dir.join("probe.csv");
        emit_text(&path, &probe_text(p))?;
        files.push(path);
    }
    let plot_dir = dir.join("plotdata");
    std::fs::create_dir_all(&plot_dir)?;
    let (written, warnings) = emit_plotdata(&outcome.evaluation.records, &outcome.evaluation.summaries, cfg.eps, &plot_dir)?;
    files.extend(written);
    Ok(RepresentativeReport {
        outcome,
        probe,
        files,
        warnings,
    })
}

/// Fixed-width table of a sweep: one row per cell, median final and success
/// rate per method.
pub fn sweep_table(outcomes: &[Arc<CellOutcome>]) -> String {
    let rows: Vec<SummaryRow> = outcomes.iter().flat_map(|o| o.summary_rows()).collect();
    let mut s = format!("{:<24} {:<12} {:>12} {:>8} {:>10}\n", "cell", "method", "median", "success", "cosine");
    for r in &rows {
        let _ = writeln!(
            s,
            "{:<24} {:<12} {:>12.4e} {:>8.2} {:>10}",
            r.cell_id,
            r.method.to_string(),
            r.median_final,
            r.success_rate,
            r.median_cosine.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    s
}

/// Writes `summary.<ext>` (all cells) and `table.txt` under `dir`.
pub fn write_sweep(outcomes: &[Arc<CellOutcome>], dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<SummaryRow> = outcomes.iter().flat_map(|o| o.summary_rows()).collect();
    let summary = emit_summary(&rows, dir, format)?;
    let table = dir.join("table.txt");
    emit_text(&table, &sweep_table(outcomes))?;
    Ok(vec![summary, table])
}

fn finals_text(s: &mut String, name: &str, r: &SeedFinals, n: u64) {
    let _ = writeln!(s, "{name}: {}/{n} seeds reached eps", r.successes);
    let _ = writeln!(s, "{name}: monotone progress = {}", r.monotone_progress());
    for (t, g) in &r.checkpoints {
        let _ = writeln!(s, "  t={t:<10} median grad norm {g:.4e}");
    }
}

pub fn momentum_text(r: &MomentumReport) -> String {
    let mut s = String::new();
    match &r.plan {
        Ok(p) => {
            let _ = writeln!(s, "plan: feasible\n{}", p.to_text());
        }
        Err(e) => {
            let _ = writeln!(s, "plan: infeasible ({e})");
        }
    }
    if let Ok(p) = &r.unconstrained_plan {
        let _ = writeln!(s, "plan without batch ceiling:\n{}", p.to_text());
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    match &r.momentum {
        Some(m) => {
            let _ = writeln!(
                s,
                "momentum: beta={} alpha={:e} tau={:e} tau0={:e} M0={} T={} (planned {})",
                m.beta, m.alpha, m.tau, m.tau0, m.warm_batch, m.iterations, m.planned_iterations
            );
            finals_text(&mut s, "momentum", &m.results, r.evaluation_seeds);
        }
        None => s.push_str("momentum: not executed\n"),
    }
    let c = &r.contrast;
    let _ = writeln!(
        s,
        "base contrast (beta=0, M=1): alpha={} tau={:e} T={} queries={}",
        c.alpha, c.tau, c.iterations, c.total_queries
    );
    finals_text(&mut s, "base", &c.results, r.evaluation_seeds);
    s
}
