//! Monte Carlo checks of the clipping, smoothing and tail inequalities.
//!
//! Every check compares an empirical left-hand side against a closed-form
//! bound. Slack is applied on the empirical side only (a few Monte Carlo
//! standard errors); the analytic bound is never inflated. `margin` is
//! `bound + slack - lhs`, so a check passes exactly when `margin >= 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{self, clip_scalar, sample_sphere_into, EstimatorError};
use crate::oracle::{GradientReference, NoiseModel, Oracle, QuadraticProblem, SampleKey};
use crate::planner;
use crate::rng::StreamKey;
use crate::vecops;

/// Standard errors of slack for the clipping and tail checks.
pub const SE_SLACK: f64 = 3.0;
/// Standard errors allowed per component in the smoothed-gradient check.
pub const GRADIENT_SE_SLACK: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheckReport {
    pub lemma_id: String,
    pub empirical_lhs: f64,
    pub bound_rhs: f64,
    pub n_samples: u64,
    pub passed: bool,
    pub margin: f64,
}

impl LemmaCheckReport {
    fn new(lemma_id: String, lhs: f64, bound: f64, slack: f64, n: u64) -> Self {
        let margin = bound + slack - lhs;
        Self {
            lemma_id,
            empirical_lhs: lhs,
            bound_rhs: bound,
            n_samples: n,
            passed: margin >= 0.0,
            margin,
        }
    }
}

#[derive(Debug, Error)]
pub enum LemmaError {
    #[error("threshold {tau} is below 4S = {min}; the bound is not claimed there")]
    ThresholdBelowScale { tau: f64, min: f64 },
    #[error("tail hypothesis fails at t = {t}: frequency {freq:.3e} exceeds {bound:.3e} beyond slack")]
    TailHypothesis { t: f64, freq: f64, bound: f64 },
    #[error("check needs at least two samples")]
    TooFewSamples,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Source of i.i.d. scalar draws addressed by index.
pub trait ScalarSampler: Sync {
    fn draw(&self, index: u64) -> Result<f64, EstimatorError>;

    /// `n` draws in index order, computed in parallel.
    fn draw_many(&self, n: usize) -> Result<Vec<f64>, EstimatorError> {
        (0..n as u64).into_par_iter().map(|i| self.draw(i)).collect()
    }
}

impl<F: Fn(u64) -> Result<f64, EstimatorError> + Sync> ScalarSampler for F {
    fn draw(&self, index: u64) -> Result<f64, EstimatorError> {
        self(index)
    }
}

/// Shared-randomness directional derivative `Y = D_mu F(x, u; xi)` at a
/// fixed point, with a fresh direction and sample for every index.
pub struct DirectionalSampler<'a, O: ?Sized> {
    pub oracle: &'a O,
    pub x: Vec<f64>,
    pub mu: f64,
    pub key: StreamKey,
}

impl<O: Oracle + ?Sized> ScalarSampler for DirectionalSampler<'_, O> {
    fn draw(&self, index: u64) -> Result<f64, EstimatorError> {
        let k = self.key.index(index);
        let mut u = vec![0.0; self.x.len()];
        sample_sphere_into(k.stream("dir"), &mut u);
        let u = estimator::Direction::from_vec(u).expect("sphere sample is nonzero");
        let sample = estimator::two_point_directional(self.oracle, &self.x, &u, self.mu, SampleKey(k.stream("xi").value()))?;
        Ok(sample.y)
    }
}

/// `S_mu` for the sampler localized at `x` on a problem with `L = 1`:
/// the tail scale used by the localized weak-Lp bound, with `Δ0 = f(x) - f_*`.
pub fn localized_scale(problem: &QuadraticProblem, x: &[f64], mu: f64) -> f64 {
    let gap = problem.value(x) - problem.min_value();
    let l = problem.smoothness();
    let bar = planner::bar_delta0(l, gap, mu);
    planner::s_mu(l, bar, problem.noise.sigma(), problem.dim, mu)
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt(), n)
}

/// `2^(2p+1) S^p t^-p`, the localized tail bound for `Y`.
pub fn localized_tail_bound(s: f64, p: f64, t: f64) -> f64 {
    2f64.powf(2.0 * p + 1.0) * s.powf(p) * t.powf(-p)
}

pub fn clipping_bias_bound(s: f64, p: f64, tau: f64) -> f64 {
    2f64.powf(2.0 * p + 1.0) / (p - 1.0) * s.powf(p) * tau.powf(1.0 - p)
}

pub fn clipped_second_moment_bound(s: f64, p: f64, tau: f64) -> f64 {
    64.0 * s.powf(p) * tau.powf(2.0 - p) * (1.0 + (tau / s).ln())
}

fn binomial_se(prob: f64, n: usize) -> f64 {
    let q = prob.clamp(0.0, 1.0);
    (q * (1.0 - q) / n as f64).sqrt()
}

/// Checks the tail hypothesis of the clipping lemmas on the drawn samples at
/// every `t` in `t_grid` (each at least `4S`).
pub fn verify_localized_tail(samples: &[f64], s: f64, p: f64, t_grid: &[f64]) -> Result<(), LemmaError> {
    for &t in t_grid {
        let bound = localized_tail_bound(s, p, t).min(1.0);
        let count = samples.iter().filter(|y| y.abs() > t).count();
        let freq = count as f64 / samples.len() as f64;
        if freq > bound + SE_SLACK * binomial_se(bound, samples.len()) {
            return Err(LemmaError::TailHypothesis { t, freq, bound });
        }
    }
    Ok(())
}

fn check_preconditions(samples: &[f64], s: f64, p: f64, tau_grid: &[f64]) -> Result<(), LemmaError> {
    if samples.len() < 2 {
        return Err(LemmaError::TooFewSamples);
    }
    for &tau in tau_grid {
        if !(tau >= 4.0 * s) {
            return Err(LemmaError::ThresholdBelowScale { tau, min: 4.0 * s });
        }
    }
    let mut t_grid = vec![4.0 * s, 8.0 * s, 16.0 * s, 64.0 * s];
    t_grid.extend_from_slice(tau_grid);
    verify_localized_tail(samples, s, p, &t_grid)
}

/// `E|Y - psi_tau(Y)| <= 2^(2p+1)/(p-1) S^p tau^(1-p)` on pre-drawn samples.
pub fn check_clipping_bias_samples(
    samples: &[f64],
    s: f64,
    p: f64,
    tau_grid: &[f64],
    label: &str,
) -> Result<Vec<LemmaCheckReport>, LemmaError> {
    check_preconditions(samples, s, p, tau_grid)?;
    Ok(tau_grid
        .iter()
        .map(|&tau| {
            let (lhs, se, n) = mean_and_se(samples.iter().map(|&y| (y - clip_scalar(y, tau)).abs()));
            LemmaCheckReport::new(
                format!("clipping_bias[{label},tau={tau:.4}]"),
                lhs,
                clipping_bias_bound(s, p, tau),
                SE_SLACK * se,
                n as u64,
            )
        })
        .collect())
}

/// `E[psi_tau(Y)^2] <= 64 S^p tau^(2-p) (1 + ln(tau/S))` on pre-drawn samples.
pub fn check_clipped_second_moment_samples(
    samples: &[f64],
    s: f64,
    p: f64,
    tau_grid: &[f64],
    label: &str,
) -> Result<Vec<LemmaCheckReport>, LemmaError> {
    check_preconditions(samples, s, p, tau_grid)?;
    Ok(tau_grid
        .iter()
        .map(|&tau| {
            let (lhs, se, n) = mean_and_se(samples.iter().map(|&y| {
                let c = clip_scalar(y, tau);
                c * c
            }));
            LemmaCheckReport::new(
                format!("clipped_second_moment[{label},tau={tau:.4}]"),
                lhs,
                clipped_second_moment_bound(s, p, tau),
                SE_SLACK * se,
                n as u64,
            )
        })
        .collect())
}

pub fn check_clipping_bias<S: ScalarSampler + ?Sized>(
    sampler: &S,
    n: usize,
    s: f64,
    p: f64,
    tau_grid: &[f64],
) -> Result<Vec<LemmaCheckReport>, LemmaError> {
    let samples = sampler.draw_many(n)?;
    check_clipping_bias_samples(&samples, s, p, tau_grid, &format!("p={p}"))
}

pub fn check_clipped_second_moment<S: ScalarSampler + ?Sized>(
    sampler: &S,
    n: usize,
    s: f64,
    p: f64,
    tau_grid: &[f64],
) -> Result<Vec<LemmaCheckReport>, LemmaError> {
    let samples = sampler.draw_many(n)?;
    check_clipped_second_moment_samples(&samples, s, p, tau_grid, &format!("p={p}"))
}

/// Value and gradient gaps of spherical smoothing on a noiseless problem.
///
/// Value: `|f_mu(x) - f(x)| <= L mu^2 / 2`, with `f_mu` estimated over the
/// uniform ball. Gradient: the Monte Carlo mean of `d Y u` is compared with
/// `grad f(x)` component-wise at 5 standard errors, which for the quadratic
/// (where `grad f_mu = grad f`) is stronger than `<= L mu`.
pub fn check_smoothing_bias<P>(
    problem: &P,
    x_grid: &[Vec<f64>],
    mu_grid: &[f64],
    n: usize,
    key: StreamKey,
) -> Result<Vec<LemmaCheckReport>, LemmaError>
where
    P: Oracle + GradientReference,
{
    if n < 2 {
        return Err(LemmaError::TooFewSamples);
    }
    let l = problem.smoothness();
    let mut reports = Vec::new();
    for (xi, x) in x_grid.iter().enumerate() {
        let fx = problem.value(x);
        let grad = problem.gradient(x);
        for (mi, &mu) in mu_grid.iter().enumerate() {
            let k = key.index(xi as u64).index(mi as u64);
            let label = format!("x#{xi},mu={mu:e}");
            // antithetic pairs over the symmetric ball; subtracting f(x) keeps
            // the constant out of the variance
            let mirrored = |v: &[f64]| -> f64 {
                let w: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| 2.0 * xi - vi).collect();
                0.5 * (problem.value(v) + problem.value(&w)) - fx
            };
            let mc = estimator::smoothed_value_mc(mirrored, x, mu, n, k.stream("value"))?;
            reports.push(LemmaCheckReport::new(
                format!("smoothing_bias_value[{label}]"),
                mc.mean.abs(),
                l * mu * mu / 2.0,
                SE_SLACK * mc.std_err,
                n as u64,
            ));

            let d = x.len();
            let sampler = DirectionalSampler {
                oracle: problem,
                x: x.clone(),
                mu,
                key: k.stream("gradient"),
            };
            let dirs = k.stream("gradient");
            let per_index: Vec<(f64, Vec<f64>)> = (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    let y = sampler.draw(i)?;
                    let mut u = vec![0.0; d];
                    sample_sphere_into(dirs.index(i).stream("dir"), &mut u);
                    Ok((y, u))
                })
                .collect::<Result<_, EstimatorError>>()?;
            let mut sum = vec![0.0; d];
            let mut sum_sq = vec![0.0; d];
            for (y, u) in &per_index {
                for j in 0..d {
                    let v = d as f64 * y * u[j];
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
            }
            let nf = n as f64;
            let mut diff = vec![0.0; d];
            let mut within = true;
            let mut se_norm_sq = 0.0;
            for j in 0..d {
                let mean = sum[j] / nf;
                let var = ((sum_sq[j] - nf * mean * mean) / (nf - 1.0)).max(0.0);
                let se = (var / nf).sqrt();
                diff[j] = mean - grad[j];
                se_norm_sq += se * se;
                within &= diff[j].abs() <= GRADIENT_SE_SLACK * se;
            }
            let lhs = vecops::norm(&diff);
            let mut report = LemmaCheckReport::new(
                format!("smoothing_bias_gradient[{label}]"),
                lhs,
                l * mu,
                GRADIENT_SE_SLACK * se_norm_sq.sqrt(),
                n as u64,
            );
            report.passed &= within;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// `P(‖grad F(x; xi) - grad f(x)‖ > t) <= (sigma/t)^p` at each `t`; passes
/// when the empirical frequency is within 3 binomial standard errors of the
/// bound (bounds at or above one pass trivially).
pub fn check_weak_tail(
    noise: &NoiseModel,
    dim: usize,
    p: f64,
    sigma: f64,
    t_grid: &[f64],
    n: usize,
    key: StreamKey,
) -> Result<Vec<LemmaCheckReport>, LemmaError> {
    if n < 2 {
        return Err(LemmaError::TooFewSamples);
    }
    let norms: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| noise.noise_norm(dim, key.index(i)))
        .collect();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let bound = (sigma / t).powf(p);
            let freq = norms.iter().filter(|&&z| z > t).count() as f64 / n as f64;
            let se = binomial_se(bound, n);
            LemmaCheckReport::new(
                format!("weak_tail[{},p={p},t={t}]", noise.family()),
                freq,
                bound,
                SE_SLACK * se,
                n as u64,
            )
        })
        .collect())
}

/// Noise models and parameters exercised by [`lemma_suite`].
#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub label: String,
    pub noise: NoiseModel,
    pub p: f64,
    /// Absolute thresholds; `None` uses multiples `{4, 8, 16, 64}` of `S`.
    pub tau_grid: Option<Vec<f64>>,
}

pub fn default_suite_cases() -> Vec<SuiteCase> {
    let mut cases: Vec<SuiteCase> = [1.2, 1.5, 1.8]
        .iter()
        .map(|&p| SuiteCase {
            label: format!("sparse_pareto,p={p}"),
            noise: NoiseModel::SparsePareto { p, scale: 1.0 },
            p,
            tau_grid: None,
        })
        .collect();
    cases.push(SuiteCase {
        label: "weak_l2,p=2".into(),
        noise: NoiseModel::WeakL2,
        p: 2.0,
        tau_grid: Some(vec![4.0, 16.0, 64.0]),
    });
    cases
}

/// Full check suite on the quadratic at `x = e_1`, `d = 10`, `mu = 1e-3`:
/// clipping bias and clipped second moment for every case, the weak-tail
/// assumption for every noise model, and smoothing bias on the noiseless
/// problem. Reports come back in a fixed order.
pub fn lemma_suite(n: usize, master_seed: u64) -> Result<Vec<LemmaCheckReport>, LemmaError> {
    const D: usize = 10;
    const MU: f64 = 1e-3;
    let root = StreamKey::root(master_seed).stream("lemmas");
    let mut x = vec![0.0; D];
    x[0] = 1.0;

    let cases = default_suite_cases();
    let per_case: Vec<Vec<LemmaCheckReport>> = cases
        .par_iter()
        .enumerate()
        .map(|(ci, case)| -> Result<Vec<LemmaCheckReport>, LemmaError> {
            let problem = QuadraticProblem::with_x0(case.noise, x.clone());
            let s = localized_scale(&problem, &x, MU);
            let sampler = DirectionalSampler {
                oracle: &problem,
                x: x.clone(),
                mu: MU,
                key: root.stream("y").index(ci as u64),
            };
            let samples = sampler.draw_many(n)?;
            let taus = case
                .tau_grid
                .clone()
                .unwrap_or_else(|| vec![4.0 * s, 8.0 * s, 16.0 * s, 64.0 * s]);
            let mut out = check_clipping_bias_samples(&samples, s, case.p, &taus, &case.label)?;
            out.extend(check_clipped_second_moment_samples(&samples, s, case.p, &taus, &case.label)?);
            let sigma = case.noise.sigma();
            let t_grid = [0.5 * sigma, 2.0 * sigma, 10.0 * sigma, 100.0 * sigma];
            out.extend(check_weak_tail(
                &case.noise,
                D,
                case.p,
                sigma,
                &t_grid,
                n,
                root.stream("tail").index(ci as u64),
            )?);
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut reports: Vec<LemmaCheckReport> = per_case.into_iter().flatten().collect();
    let noiseless = QuadraticProblem::with_x0(NoiseModel::None, x.clone());
    let mut x_far = vec![0.0; D];
    x_far[0] = 3.0;
    x_far[1] = -2.0;
    reports.extend(check_smoothing_bias(
        &noiseless,
        &[x, x_far],
        &[MU, 0.1],
        n / 10,
        root.stream("smoothing"),
    )?);
    Ok(reports)
}
