//! Tuning, evaluation, sweeps and the small-batch momentum experiment.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::SummaryRow;
use crate::diagnostics::{aggregate_metrics, direction_probe, median, MethodSummary, ProbeResult, ProbeSettings};
use crate::estimator::Aggregation;
use crate::optimizer::{
    run_lockstep, BaseConfig, MomentumConfig, OptimizerConfig, OptimizerError, RecordLevel, RunOptions, RunOutcome,
    RunStatus,
};
use crate::oracle::{GradientReference, Oracle, OracleError, QuadraticProblem, SampleKey};
use crate::planner::{self, PlannedParams, PlannerError, PlannerInputs};
use crate::record::{Method, RunRecord};
use crate::rng::StreamKey;

/// Master seed of run number `seed` (validation and evaluation seeds are
/// offsets `0..v` and `v..v+e` under one experiment seed).
pub fn run_seed(master_seed: u64, seed: u64) -> u64 {
    StreamKey::root(master_seed).stream("seed").index(seed).value()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SeedPhase {
    Validation,
    Evaluation,
}

pub fn validation_seeds(cfg: &ExperimentConfig) -> std::ops::Range<u64> {
    0..cfg.validation_seeds
}

pub fn evaluation_seeds(cfg: &ExperimentConfig) -> std::ops::Range<u64> {
    cfg.validation_seeds..cfg.validation_seeds + cfg.evaluation_seeds
}

/// Record of which seeds reached the oracle in which phase, and how often.
#[derive(Debug, Default)]
pub struct SeedAudit {
    entries: Mutex<BTreeMap<(SeedPhase, u64), u64>>,
}

impl SeedAudit {
    pub fn seeds(&self, phase: SeedPhase) -> Vec<u64> {
        self.entries
            .lock()
            .unwrap()
            .keys()
            .filter(|(p, _)| *p == phase)
            .map(|(_, s)| *s)
            .collect()
    }

    pub fn evaluations(&self, phase: SeedPhase, seed: u64) -> u64 {
        self.entries.lock().unwrap().get(&(phase, seed)).copied().unwrap_or(0)
    }

    fn add(&self, phase: SeedPhase, seed: u64, count: u64) {
        *self.entries.lock().unwrap().entry((phase, seed)).or_insert(0) += count;
    }
}

/// Oracle tagged with the phase and seed it serves; evaluation counts land
/// in the audit when it is dropped.
pub struct AuditedOracle<'a, O> {
    inner: &'a O,
    phase: SeedPhase,
    seed: u64,
    count: AtomicU64,
    audit: &'a SeedAudit,
}

impl<'a, O> AuditedOracle<'a, O> {
    pub fn new(inner: &'a O, phase: SeedPhase, seed: u64, audit: &'a SeedAudit) -> Self {
        Self {
            inner,
            phase,
            seed,
            count: AtomicU64::new(0),
            audit,
        }
    }
}

impl<O: Oracle> Oracle for AuditedOracle<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x, key)
    }
}

impl<O> Drop for AuditedOracle<'_, O> {
    fn drop(&mut self) {
        self.audit.add(self.phase, self.seed, *self.count.get_mut());
    }
}

/// One hyperparameter setting of one method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub method: Method,
    pub alpha: f64,
    /// `tau` for scalar clipping, `r_vec` for vector clipping.
    pub threshold: Option<f64>,
}

impl Cell {
    pub fn optimizer_config(&self, cfg: &ExperimentConfig) -> OptimizerConfig {
        let aggregation = match (self.method, self.threshold) {
            (Method::Raw, _) => Aggregation::Raw,
            (Method::VectorClip, Some(radius)) => Aggregation::VectorClip { radius },
            (Method::ScalarClip | Method::ScalarClipMomentum, Some(tau)) => Aggregation::ScalarClip { tau },
            (m, None) => panic!("{m} needs a threshold"),
        };
        let base = BaseConfig {
            alpha: self.alpha,
            mu: cfg.mu,
            batch_size: cfg.batch_size,
            aggregation,
            iterations: cfg.iter_budget,
        };
        match self.method {
            Method::ScalarClipMomentum => OptimizerConfig::Momentum(MomentumConfig {
                base,
                beta: cfg.momentum_beta,
                warm_batch_size: cfg.batch_size,
                warm_aggregation: aggregation,
            }),
            _ => OptimizerConfig::Base(base),
        }
    }
}

/// All grid cells of one method, stepsize-major.
pub fn grid_cells(cfg: &ExperimentConfig, method: Method) -> Vec<Cell> {
    let thresholds: Vec<Option<f64>> = match method {
        Method::Raw => vec![None],
        Method::VectorClip => cfg.rvec_grid.iter().map(|&r| Some(r)).collect(),
        Method::ScalarClip | Method::ScalarClipMomentum => cfg.tau_values().into_iter().map(Some).collect(),
    };
    cfg.stepsize_grid
        .iter()
        .flat_map(|&alpha| thresholds.iter().map(move |&threshold| Cell { method, alpha, threshold }))
        .collect()
}

fn final_grad_norm(outcome: &RunOutcome) -> f64 {
    match outcome.status {
        RunStatus::Completed => outcome
            .final_record()
            .and_then(|r| r.grad_norm)
            .unwrap_or(f64::INFINITY),
        RunStatus::Diverged { .. } | RunStatus::Aborted(_) => f64::INFINITY,
    }
}

/// Runs `cells` on each seed (seeds in parallel, cells in lockstep) and
/// returns outcomes indexed `[seed position][cell]`.
fn run_cells(
    cfg: &ExperimentConfig,
    problem: &QuadraticProblem,
    cells: &[Cell],
    seeds: std::ops::Range<u64>,
    phase: SeedPhase,
    record: RecordLevel,
    audit: &SeedAudit,
) -> Result<Vec<Vec<RunOutcome>>, OptimizerError> {
    let configs: Vec<OptimizerConfig> = cells.iter().map(|c| c.optimizer_config(cfg)).collect();
    let seeds: Vec<u64> = seeds.collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let oracle = AuditedOracle::new(problem, phase, seed, audit);
            let options = RunOptions {
                reference: Some(problem as &dyn GradientReference),
                record,
                divergence_threshold: cfg.divergence_threshold,
            };
            run_lockstep(&oracle, &configs, &problem.x0, run_seed(cfg.master_seed, seed), options)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellScore {
    pub cell: Cell,
    /// Final `‖grad f‖` per validation seed (`inf` when the run diverged).
    pub finals: Vec<f64>,
    pub median_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Selection {
    Tuned { cell: Cell, median_final: f64 },
    /// Every cell diverged on every validation seed it was run on.
    Untunable,
}

impl Selection {
    pub fn cell(&self) -> Option<Cell> {
        match self {
            Selection::Tuned { cell, .. } => Some(*cell),
            Selection::Untunable => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub scores: Vec<CellScore>,
    pub selections: BTreeMap<Method, Selection>,
}

/// Lowest median final; ties go to the smaller stepsize, then the smaller
/// threshold. Cells with an infinite median are never selected.
pub fn select_cell<'a>(scores: impl Iterator<Item = &'a CellScore>) -> Selection {
    scores
        .filter(|s| s.median_final.is_finite())
        .min_by(|a, b| {
            a.median_final
                .total_cmp(&b.median_final)
                .then(a.cell.alpha.total_cmp(&b.cell.alpha))
                .then(a.cell.threshold.unwrap_or(0.0).total_cmp(&b.cell.threshold.unwrap_or(0.0)))
        })
        .map(|s| Selection::Tuned {
            cell: s.cell,
            median_final: s.median_final,
        })
        .unwrap_or(Selection::Untunable)
}

/// Runs every grid cell of every configured method on the validation seeds
/// and selects one cell per method.
pub fn tune(cfg: &ExperimentConfig, audit: &SeedAudit) -> Result<TuneOutcome, OptimizerError> {
    let problem = cfg.problem();
    let cells: Vec<Cell> = cfg.methods.iter().flat_map(|&m| grid_cells(cfg, m)).collect();
    let outcomes = run_cells(
        cfg,
        &problem,
        &cells,
        validation_seeds(cfg),
        SeedPhase::Validation,
        RecordLevel::FinalOnly,
        audit,
    )?;
    let scores: Vec<CellScore> = cells
        .iter()
        .enumerate()
        .map(|(i, &cell)| {
            let finals: Vec<f64> = outcomes.iter().map(|per_seed| final_grad_norm(&per_seed[i])).collect();
            let median_final = median(&finals).unwrap_or(f64::INFINITY);
            CellScore {
                cell,
                finals,
                median_final: if median_final.is_nan() { f64::INFINITY } else { median_final },
            }
        })
        .collect();
    let selections = cfg
        .methods
        .iter()
        .map(|&m| (m, select_cell(scores.iter().filter(|s| s.cell.method == m))))
        .collect();
    Ok(TuneOutcome { scores, selections })
}

/// Records and per-method summaries of the evaluation seeds.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cells: Vec<Cell>,
    pub records: Vec<RunRecord>,
    pub summaries: BTreeMap<Method, MethodSummary>,
    pub total_queries: BTreeMap<Method, u64>,
}

fn to_run_records(method: Method, seed: u64, outcome: &RunOutcome) -> Vec<RunRecord> {
    outcome
        .records
        .iter()
        .map(|r| RunRecord {
            method,
            seed,
            t: r.t,
            grad_norm: r.grad_norm.unwrap_or(f64::NAN),
            cosine: r.cosine,
            outlier_log_ratio: r.outlier_log_ratio,
            clipped_fraction: r.clipped_fraction,
            queries: r.queries,
        })
        .collect()
}

/// Runs the given cells on the evaluation seeds with full per-iteration
/// records.
pub fn evaluate(cfg: &ExperimentConfig, cells: &[Cell], audit: &SeedAudit) -> Result<Evaluation, OptimizerError> {
    let problem = cfg.problem();
    let seeds = evaluation_seeds(cfg);
    let outcomes = run_cells(
        cfg,
        &problem,
        cells,
        seeds.clone(),
        SeedPhase::Evaluation,
        RecordLevel::Every,
        audit,
    )?;
    let mut records = Vec::new();
    for (seed, per_seed) in seeds.zip(&outcomes) {
        for (cell, outcome) in cells.iter().zip(per_seed) {
            records.extend(to_run_records(cell.method, seed, outcome));
        }
    }
    records.sort_by_key(|r| (r.method, r.seed, r.t));
    let mut summaries = BTreeMap::new();
    let mut total_queries = BTreeMap::new();
    for cell in cells {
        let own: Vec<RunRecord> = records.iter().filter(|r| r.method == cell.method).cloned().collect();
        if let Some(s) = aggregate_metrics(&own, cfg.eps) {
            summaries.insert(cell.method, s);
        }
        total_queries.insert(cell.method, cell.optimizer_config(cfg).total_queries());
    }
    Ok(Evaluation {
        cells: cells.to_vec(),
        records,
        summaries,
        total_queries,
    })
}

/// Tuning followed by evaluation of the selected cells.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell_id: String,
    pub config: ExperimentConfig,
    pub tune: TuneOutcome,
    pub evaluation: Evaluation,
}

impl CellOutcome {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.evaluation
            .summaries
            .iter()
            .map(|(&method, s)| SummaryRow {
                cell_id: self.cell_id.clone(),
                method,
                d: self.config.d,
                p: self.config.tail_exponent(),
                m: self.config.batch_size,
                median_final: s.median_final,
                success_rate: s.success_rate,
                median_cosine: s.median_cosine,
                total_queries: self.evaluation.total_queries[&method],
            })
            .collect()
    }

    pub fn median_final(&self, method: Method) -> Option<f64> {
        self.evaluation.summaries.get(&method).map(|s| s.median_final)
    }
}

pub fn cell_id(cfg: &ExperimentConfig) -> String {
    let label = format!("d={},p={}", cfg.d, cfg.tail_exponent());
    if cfg.tail_exponent() > 2.0 {
        format!("{label} (sanity-check)")
    } else {
        label
    }
}

/// Memo of tune-then-evaluate results keyed by the configuration text
/// (minus the output directory), so identical cells in different
/// experiments are computed once.
#[derive(Debug, Default)]
pub struct ExperimentCache {
    done: Mutex<HashMap<String, Arc<CellOutcome>>>,
}

fn cache_key(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = Default::default();
    c.to_text()
}

pub fn tune_and_evaluate(
    cfg: &ExperimentConfig,
    audit: &SeedAudit,
    cache: Option<&ExperimentCache>,
) -> Result<Arc<CellOutcome>, OptimizerError> {
    let key = cache_key(cfg);
    if let Some(hit) = cache.and_then(|c| c.done.lock().unwrap().get(&key).cloned()) {
        return Ok(hit);
    }
    let tune = tune(cfg, audit)?;
    let cells: Vec<Cell> = tune.selections.values().filter_map(Selection::cell).collect();
    let evaluation = evaluate(cfg, &cells, audit)?;
    let outcome = Arc::new(CellOutcome {
        cell_id: cell_id(cfg),
        config: cfg.clone(),
        tune,
        evaluation,
    });
    if let Some(c) = cache {
        c.done.lock().unwrap().insert(key, outcome.clone());
    }
    Ok(outcome)
}

/// Matched-batch probe at the tuned thresholds of the representative run.
pub fn probe_for(cfg: &ExperimentConfig, tune: &TuneOutcome) -> Result<Option<ProbeResult>, OptimizerError> {
    let tau = tune
        .selections
        .get(&Method::ScalarClip)
        .and_then(Selection::cell)
        .and_then(|c| c.threshold);
    let radius = tune
        .selections
        .get(&Method::VectorClip)
        .and_then(Selection::cell)
        .and_then(|c| c.threshold);
    let (Some(tau), Some(radius)) = (tau, radius) else {
        return Ok(None);
    };
    let settings = ProbeSettings {
        batch_size: cfg.batch_size,
        mu: cfg.mu,
        tau,
        radius,
        point_norm: cfg.probe_norm,
        n_points: cfg.probe_points,
    };
    let key = StreamKey::root(cfg.master_seed).stream("probe");
    Ok(Some(direction_probe(&cfg.problem(), &settings, key)?))
}

pub fn sweep_dimension(
    cfg: &ExperimentConfig,
    audit: &SeedAudit,
    cache: Option<&ExperimentCache>,
) -> Result<Vec<Arc<CellOutcome>>, OptimizerError> {
    cfg.sweep_dims
        .iter()
        .map(|&d| {
            let c = ExperimentConfig { d, ..cfg.clone() };
            tune_and_evaluate(&c, audit, cache)
        })
        .collect()
}

/// Tail sweep; exponents above 2 lie outside the weak-Lp regime and are
/// labelled as sanity checks.
pub fn sweep_tail(
    cfg: &ExperimentConfig,
    audit: &SeedAudit,
    cache: Option<&ExperimentCache>,
) -> Result<Vec<Arc<CellOutcome>>, OptimizerError> {
    cfg.sweep_tails
        .iter()
        .map(|&p| {
            let c = ExperimentConfig { p, ..cfg.clone() };
            tune_and_evaluate(&c, audit, cache)
        })
        .collect()
}

/// Largest warm-start batch the experiment will execute.
pub const WARM_BATCH_EXECUTION_CAP: u128 = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedFinals {
    pub finals: Vec<f64>,
    pub successes: usize,
    /// Median `‖grad f‖` across seeds at ten evenly spaced checkpoints.
    pub checkpoints: Vec<(u64, f64)>,
}

impl SeedFinals {
    /// Median gradient norm never increases between checkpoints and ends
    /// below where it started.
    pub fn monotone_progress(&self) -> bool {
        self.checkpoints.windows(2).all(|w| w[1].1 <= w[0].1)
            && self.checkpoints.first().zip(self.checkpoints.last()).is_some_and(|(a, b)| b.1 < a.1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentumExecution {
    pub beta: f64,
    pub alpha: f64,
    pub tau: f64,
    pub tau0: f64,
    pub warm_batch: usize,
    pub iterations: u64,
    pub planned_iterations: u128,
    pub capped: bool,
    pub results: SeedFinals,
}

#[derive(Clone, Debug, Serialize)]
pub struct BaseContrast {
    pub alpha: f64,
    pub tau: f64,
    pub iterations: u64,
    pub total_queries: u64,
    pub results: SeedFinals,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentumReport {
    /// Planner outcome under the default batch ceiling.
    pub plan: Result<PlannedParams, String>,
    /// Planner outcome with the ceiling lifted, for reporting only.
    pub unconstrained_plan: Result<PlannedParams, String>,
    pub momentum: Option<MomentumExecution>,
    pub contrast: BaseContrast,
    pub notes: Vec<String>,
    pub evaluation_seeds: u64,
}

fn seed_finals(
    cfg: &ExperimentConfig,
    problem: &QuadraticProblem,
    config: &OptimizerConfig,
    audit: &SeedAudit,
) -> Result<SeedFinals, OptimizerError> {
    let outcomes = run_cells_raw(cfg, problem, config, audit)?;
    let finals: Vec<f64> = outcomes.iter().map(final_grad_norm).collect();
    let total = config.iterations();
    let marks: Vec<u64> = (1..=10).map(|k| (total * k / 10).max(1)).collect();
    let checkpoints = marks
        .iter()
        .map(|&t| {
            let at: Vec<f64> = outcomes
                .iter()
                .map(|o| {
                    o.records
                        .iter()
                        .rev()
                        .find(|r| r.t <= t)
                        .and_then(|r| r.grad_norm)
                        .unwrap_or(f64::INFINITY)
                })
                .collect();
            (t, median(&at).unwrap_or(f64::INFINITY))
        })
        .collect();
    Ok(SeedFinals {
        successes: finals.iter().filter(|&&g| g <= cfg.eps).count(),
        finals,
        checkpoints,
    })
}

/// One configuration on every evaluation seed, recording every iteration.
fn run_cells_raw(
    cfg: &ExperimentConfig,
    problem: &QuadraticProblem,
    config: &OptimizerConfig,
    audit: &SeedAudit,
) -> Result<Vec<RunOutcome>, OptimizerError> {
    let seeds: Vec<u64> = evaluation_seeds(cfg).collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let oracle = AuditedOracle::new(problem, SeedPhase::Evaluation, seed, audit);
            let options = RunOptions {
                reference: Some(problem as &dyn GradientReference),
                record: RecordLevel::Every,
                divergence_threshold: cfg.divergence_threshold,
            };
            crate::optimizer::run(&oracle, config, &problem.x0, run_seed(cfg.master_seed, seed), options)
        })
        .collect()
}

/// Planner inputs of the configured problem (`L = 1`, `Δ0 = ½‖x0‖²`).
pub fn planner_inputs(cfg: &ExperimentConfig) -> PlannerInputs {
    let problem = cfg.problem();
    PlannerInputs::new(
        1.0,
        problem.initial_gap(),
        problem.noise.sigma(),
        cfg.tail_exponent(),
        cfg.d,
        cfg.eps,
        cfg.delta,
    )
}

/// Momentum with a batch of one, using planner-supplied `(β, α, τ, τ0, M0, T)`
/// with `T` capped at `momentum_t_cap`, contrasted with the base method at
/// `M = 1` and the same query budget.
pub fn run_momentum_smallbatch(cfg: &ExperimentConfig, audit: &SeedAudit) -> Result<MomentumReport, OptimizerError> {
    let problem = cfg.problem();
    let inputs = planner_inputs(cfg);
    let plan = planner::plan_momentum_small_batch(&inputs, 1);
    let unconstrained = planner::plan_momentum_small_batch(&inputs.with_ceiling(1 << 120), 1);
    let mut notes = Vec::new();
    if let Err(e) = &plan {
        notes.push(format!("planner: {e}"));
    }

    let mut momentum = None;
    let mut budget_queries = 2 * cfg.momentum_t_cap;
    if let Ok(p) = &plan {
        let omb = p.one_minus_beta.expect("momentum plan has 1 - beta");
        let beta = 1.0 - omb;
        let m0 = p.m0_required.expect("momentum plan has M0");
        if !(beta < 1.0) {
            notes.push(format!("planner 1 - beta = {omb:e} is below f64 resolution; momentum run not executed"));
        } else if m0 > WARM_BATCH_EXECUTION_CAP {
            notes.push(format!("warm-start batch {m0} exceeds execution cap {WARM_BATCH_EXECUTION_CAP}; momentum run not executed"));
        } else {
            let iterations = p.t.min(cfg.momentum_t_cap as u128) as u64;
            let capped = p.t > cfg.momentum_t_cap as u128;
            if capped {
                notes.push(format!(
                    "planner T = {} capped at {}; acceptance downgrades to monotone progress",
                    p.t, cfg.momentum_t_cap
                ));
            }
            let tau0 = p.tau0.expect("momentum plan has tau0");
            let config = OptimizerConfig::Momentum(MomentumConfig {
                base: BaseConfig {
                    alpha: p.alpha,
                    mu: p.mu,
                    batch_size: 1,
                    aggregation: Aggregation::ScalarClip { tau: p.tau },
                    iterations,
                },
                beta,
                warm_batch_size: m0 as usize,
                warm_aggregation: Aggregation::ScalarClip { tau: tau0 },
            });
            budget_queries = config.total_queries();
            momentum = Some(MomentumExecution {
                beta,
                alpha: p.alpha,
                tau: p.tau,
                tau0,
                warm_batch: m0 as usize,
                iterations,
                planned_iterations: p.t,
                capped,
                results: seed_finals(cfg, &problem, &config, audit)?,
            });
        }
    }

    // Base contrast: M = 1, α = 1/(4L), τ from the base rule at M = 1.
    let iterations = (budget_queries / 2).max(1);
    let mu = inputs.mu_value();
    let bar = planner::bar_delta0(1.0, inputs.delta0, mu);
    let s = planner::s_mu(1.0, bar, inputs.sigma, cfg.d, mu);
    let lambda = (iterations as f64 / cfg.delta).ln().max(1.0);
    let tau = planner::clip_threshold(s, 1.0 / lambda, inputs.p);
    let config = OptimizerConfig::Base(BaseConfig {
        alpha: 0.25,
        mu,
        batch_size: 1,
        aggregation: Aggregation::ScalarClip { tau },
        iterations,
    });
    let contrast = BaseContrast {
        alpha: 0.25,
        tau,
        iterations,
        total_queries: config.total_queries(),
        results: seed_finals(cfg, &problem, &config, audit)?,
    };
    Ok(MomentumReport {
        plan: plan.map_err(|e: PlannerError| e.to_string()),
        unconstrained_plan: unconstrained.map_err(|e| e.to_string()),
        momentum,
        contrast,
        notes,
        evaluation_seeds: cfg.evaluation_seeds,
    })
}
