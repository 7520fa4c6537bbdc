//! Batch-level and run-level summary metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::record::RunRecord;
use crate::vecops;

/// `<g, grad> / (‖g‖ ‖grad‖)`; `None` when either vector is zero or the
/// result is not finite.
pub fn cosine_alignment(g: &[f64], grad_true: &[f64]) -> Option<f64> {
    let ng = vecops::norm(g);
    let nt = vecops::norm(grad_true);
    if ng == 0.0 || nt == 0.0 {
        return None;
    }
    let c = vecops::dot(g, grad_true) / (ng * nt);
    c.is_finite().then(|| c.clamp(-1.0, 1.0))
}

/// Lower median of a non-empty slice (element `(n-1)/2` after sorting).
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    Some(*m)
}

/// Conventional median (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linearly interpolated quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// `log10(max |Y| / lower-median |Y|)`; `None` for empty or zero-median
/// batches.
pub fn outlier_ratio(raw_scalars: &[f64]) -> Option<f64> {
    let abs: Vec<f64> = raw_scalars.iter().map(|y| y.abs()).collect();
    let med = lower_median(&abs)?;
    if !(med > 0.0) {
        return None;
    }
    let max = abs.iter().copied().fold(0.0, f64::max);
    let r = (max / med).log10();
    r.is_finite().then_some(r)
}

/// Fixed-width histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0);
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if !v.is_finite() {
                continue;
            }
            let idx = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + width * i as f64, self.lo + width * (i + 1) as f64)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-method summary across evaluation seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub n_seeds: usize,
    /// Final gradient norm per seed, in ascending seed order.
    pub finals: Vec<f64>,
    pub median_final: f64,
    pub success_rate: f64,
    pub median_cosine: Option<f64>,
    pub cosine_histogram: Histogram,
    pub outlier_histogram: Histogram,
}

pub const COSINE_BINS: usize = 40;
pub const OUTLIER_BINS: usize = 40;
pub const OUTLIER_RANGE: f64 = 6.0;

/// Summarizes the records of one method. The final value of a seed is the
/// record with the largest `t`; success means final `<= eps`. Returns `None`
/// when no records are given.
pub fn aggregate_metrics(records: &[RunRecord], eps: f64) -> Option<MethodSummary> {
    let mut finals: BTreeMap<u64, (u64, f64)> = BTreeMap::new();
    let mut cosines = Vec::new();
    let mut outliers = Vec::new();
    for r in records {
        let e = finals.entry(r.seed).or_insert((r.t, r.grad_norm));
        if r.t >= e.0 {
            *e = (r.t, r.grad_norm);
        }
        if let Some(c) = r.cosine {
            cosines.push(c);
        }
        if let Some(o) = r.outlier_log_ratio {
            outliers.push(o);
        }
    }
    aggregate_finals(finals.into_values().map(|(_, g)| g).collect(), &cosines, &outliers, eps)
}

/// As [`aggregate_metrics`] from already-extracted per-seed finals and
/// pooled per-iteration diagnostics.
pub fn aggregate_finals(finals: Vec<f64>, cosines: &[f64], outliers: &[f64], eps: f64) -> Option<MethodSummary> {
    let median_final = median(&finals)?;
    let successes = finals.iter().filter(|&&g| g <= eps).count();
    Some(MethodSummary {
        n_seeds: finals.len(),
        success_rate: successes as f64 / finals.len() as f64,
        median_final,
        median_cosine: median(cosines),
        cosine_histogram: Histogram::build(cosines, -1.0, 1.0, COSINE_BINS),
        outlier_histogram: Histogram::build(outliers, 0.0, OUTLIER_RANGE, OUTLIER_BINS),
        finals,
    })
}
