//! Figure data: per-method curve files, histogram files and a small SVG
//! rendering with a logarithmic y-axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;

use super::output::{emit_text, fmt_real};
use crate::diagnostics::{quantile, Histogram, MethodSummary};
use crate::record::{Method, RunRecord};

/// Median and quartiles of `grad_norm` across seeds at one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub t: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Per-method curves, in method order.
pub fn curves(records: &[RunRecord]) -> BTreeMap<Method, Vec<CurvePoint>> {
    let mut by: BTreeMap<Method, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        by.entry(r.method).or_default().entry(r.t).or_default().push(r.grad_norm);
    }
    by.into_iter()
        .map(|(m, ts)| {
            let pts = ts
                .into_iter()
                .map(|(t, v)| CurvePoint {
                    t,
                    median: quantile(&v, 0.5).unwrap(),
                    q25: quantile(&v, 0.25).unwrap(),
                    q75: quantile(&v, 0.75).unwrap(),
                })
                .collect();
            (m, pts)
        })
        .collect()
}

pub fn curve_text(points: &[CurvePoint]) -> String {
    let mut s = String::from("iteration,median,q25,q75\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.t, fmt_real(p.median), fmt_real(p.q25), fmt_real(p.q75));
    }
    s
}

pub fn histogram_text(h: &Histogram) -> String {
    let mut s = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.bin_edges(i);
        let _ = writeln!(s, "{},{},{}", fmt_real(lo), fmt_real(hi), c);
    }
    s
}

const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

/// Self-contained SVG of median curves (log10 y-axis) with a reference line
/// at `eps`. Non-positive values are dropped from the log plot.
pub fn render_svg(series: &[(String, Vec<CurvePoint>)], eps: Option<f64>) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().map(|p| (p.t as f64, p.median)))
        .filter(|&(_, y)| y > 0.0 && y.is_finite())
        .collect();
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    svg.push('\n');
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let x_max = pts.iter().map(|p| p.0).fold(1.0, f64::max);
    let mut ly_min = pts.iter().map(|p| p.1.log10()).fold(f64::INFINITY, f64::min);
    let mut ly_max = pts.iter().map(|p| p.1.log10()).fold(f64::NEG_INFINITY, f64::max);
    if let Some(e) = eps.filter(|e| *e > 0.0) {
        ly_min = ly_min.min(e.log10());
        ly_max = ly_max.max(e.log10());
    }
    ly_min = ly_min.floor();
    ly_max = ly_max.ceil().max(ly_min + 1.0);
    let sx = |x: f64| pad + (w - 2.0 * pad) * x / x_max;
    let sy = |y: f64| h - pad - (h - 2.0 * pad) * (y.log10() - ly_min) / (ly_max - ly_min);

    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let mut decade = ly_min;
    while decade <= ly_max {
        let y = sy(10f64.powf(decade));
        let _ = writeln!(
            svg,
            r##"<line x1="{pad}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="4" y="{:.2}" font-size="11">1e{decade}</text>"##,
            w - pad,
            y + 4.0
        );
        decade += 1.0;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="11">iteration (max {x_max})</text>"#,
        w / 2.0 - 50.0,
        h - 15.0
    );
    if let Some(e) = eps.filter(|e| *e > 0.0) {
        let y = sy(e);
        let _ = writeln!(
            svg,
            r#"<line x1="{pad}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            w - pad
        );
    }
    for (i, (name, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .iter()
            .filter(|p| p.median > 0.0 && p.median.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.t as f64), sy(p.median)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{name}</text>"#,
            w - pad - 110.0,
            pad + 16.0 * (i as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `curve_<method>.csv`, `hist_cosine_<method>.csv`,
/// `hist_outlier_<method>.csv` and `curves.svg` into `dir`. Methods with no
/// data get no file and a warning. Returns the files written.
pub fn emit_plotdata(
    records: &[RunRecord],
    summaries: &BTreeMap<Method, MethodSummary>,
    eps: f64,
    dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let mut written = Vec::new();
    let mut warnings = Vec::new();
    let all = curves(records);
    let mut series = Vec::new();
    for (method, pts) in &all {
        if pts.is_empty() {
            warnings.push(format!("no curve data for {method}; skipped"));
            continue;
        }
        let path = dir.join(format!("curve_{method}.csv"));
        emit_text(&path, &curve_text(pts))?;
        written.push(path);
        series.push((method.to_string(), pts.clone()));
    }
    for (method, summary) in summaries {
        for (kind, h) in [("cosine", &summary.cosine_histogram), ("outlier", &summary.outlier_histogram)] {
            if h.total() == 0 {
                warnings.push(format!("no {kind} data for {method}; histogram skipped"));
                continue;
            }
            let path = dir.join(format!("hist_{kind}_{method}.csv"));
            emit_text(&path, &histogram_text(h))?;
            written.push(path);
        }
    }
    if series.is_empty() {
        warnings.push("no curve data at all; curves.svg skipped".into());
    } else {
        let path = dir.join("curves.svg");
        emit_text(&path, &render_svg(&series, Some(eps)))?;
        written.push(path);
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok((written, warnings))
}
