//! Base and momentum zeroth-order optimizers sharing one loop.
//!
//! Base:     `g_t = G(x_t)`, `x_{t+1} = x_t - alpha g_t`.
//! Momentum: warm start `g_0 = G(x_0; M_0, tau_0)`, `m_0 = g_0`,
//!           `x_1 = x_0 - alpha m_0`, then
//!           `m_t = beta m_{t-1} + (1 - beta) g_t`, `x_{t+1} = x_t - alpha m_t`.
//!
//! The raw and vector-clip baselines are aggregation modes of the base loop.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{cosine_alignment, outlier_ratio};
use crate::estimator::{
    direction_key, Aggregation, DirectionSource, DirectionalBatch, EstimatorError, GradientEstimate, UniformSphere,
};
use crate::oracle::{GradientReference, Oracle};
use crate::rng::StreamKey;
use crate::vecops;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration budget exhausted (t = {t}, T = {budget})")]
    BudgetExhausted { t: u64, budget: u64 },
    #[error("momentum step requires a warm-started state")]
    NotWarmStarted,
    #[error("state dimension {got} does not match oracle dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub alpha: f64,
    pub mu: f64,
    pub batch_size: usize,
    pub aggregation: Aggregation,
    /// Iteration budget `T`.
    pub iterations: u64,
}

impl BaseConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(OptimizerError::InvalidConfig(format!("stepsize {} must be finite and >= 0", self.alpha)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(OptimizerError::InvalidConfig(format!("smoothing radius {} must be positive", self.mu)));
        }
        if self.batch_size == 0 {
            return Err(OptimizerError::InvalidConfig("batch size must be positive".into()));
        }
        self.aggregation.validate()?;
        Ok(())
    }

    /// Total oracle evaluations of a full run, `2 M T`.
    pub fn total_queries(&self) -> u64 {
        2 * self.batch_size as u64 * self.iterations
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumConfig {
    /// `iterations` counts the warm start: a run performs the warm start and
    /// `T - 1` momentum steps.
    pub base: BaseConfig,
    pub beta: f64,
    pub warm_batch_size: usize,
    /// Warm-start aggregation (normally scalar clipping with `tau_0`).
    pub warm_aggregation: Aggregation,
}

impl MomentumConfig {
    /// Accepts `beta` in `[0, 1)`; `beta = 0` is the degenerate comparison
    /// case. The planner separately enforces the theory range `[1/2, 1)`.
    pub fn validate(&self) -> Result<(), OptimizerError> {
        self.base.validate()?;
        if !(0.0..1.0).contains(&self.beta) {
            return Err(OptimizerError::InvalidConfig(format!("momentum beta {} outside [0, 1)", self.beta)));
        }
        if self.warm_batch_size == 0 {
            return Err(OptimizerError::InvalidConfig("warm-start batch size must be positive".into()));
        }
        self.warm_aggregation.validate()?;
        Ok(())
    }

    /// `2 M_0 + 2 M (T - 1)` (zero for `T = 0`).
    pub fn total_queries(&self) -> u64 {
        match self.base.iterations {
            0 => 0,
            t => 2 * self.warm_batch_size as u64 + 2 * self.base.batch_size as u64 * (t - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Base(BaseConfig),
    Momentum(MomentumConfig),
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        match self {
            OptimizerConfig::Base(c) => c.validate(),
            OptimizerConfig::Momentum(c) => c.validate(),
        }
    }

    pub fn iterations(&self) -> u64 {
        match self {
            OptimizerConfig::Base(c) => c.iterations,
            OptimizerConfig::Momentum(c) => c.base.iterations,
        }
    }

    pub fn total_queries(&self) -> u64 {
        match self {
            OptimizerConfig::Base(c) => c.total_queries(),
            OptimizerConfig::Momentum(c) => c.total_queries(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub x: Vec<f64>,
    /// Momentum buffer (momentum variant only).
    pub m: Option<Vec<f64>>,
    pub queries: u64,
}

impl OptimizerState {
    pub fn initial(x0: Vec<f64>) -> Self {
        Self {
            t: 0,
            x: x0,
            m: None,
            queries: 0,
        }
    }
}

/// Result of one update: the new state and the estimate that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: OptimizerState,
    pub estimate: GradientEstimate,
}

/// Key of the batch used at iteration `t` of a base run (or momentum step).
pub fn iteration_key(master_seed: u64, t: u64) -> StreamKey {
    StreamKey::root(master_seed).stream("iter").index(t)
}

/// Key of the warm-start batch of a momentum run.
pub fn warm_key(master_seed: u64) -> StreamKey {
    StreamKey::root(master_seed).stream("warm")
}

fn check_dim<O: Oracle + ?Sized>(oracle: &O, x: &[f64]) -> Result<(), OptimizerError> {
    if oracle.dim() != x.len() {
        return Err(OptimizerError::DimensionMismatch {
            expected: oracle.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn estimate<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
    oracle: &O,
    x: &[f64],
    mu: f64,
    m: usize,
    agg: Aggregation,
    key: StreamKey,
    source: &S,
) -> Result<GradientEstimate, OptimizerError> {
    Ok(DirectionalBatch::sample_with(oracle, x, mu, m, key, source)?.aggregate(agg)?)
}

/// One base iteration.
pub fn base_step<O: Oracle + ?Sized>(
    state: &OptimizerState,
    oracle: &O,
    config: &BaseConfig,
    key: StreamKey,
) -> Result<Step, OptimizerError> {
    base_step_with(state, oracle, config, key, &UniformSphere)
}

pub fn base_step_with<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
    state: &OptimizerState,
    oracle: &O,
    config: &BaseConfig,
    key: StreamKey,
    source: &S,
) -> Result<Step, OptimizerError> {
    if state.t >= config.iterations {
        return Err(OptimizerError::BudgetExhausted {
            t: state.t,
            budget: config.iterations,
        });
    }
    check_dim(oracle, &state.x)?;
    let est = estimate(oracle, &state.x, config.mu, config.batch_size, config.aggregation, key, source)?;
    let mut x = state.x.clone();
    vecops::axpy(-config.alpha, &est.g, &mut x);
    Ok(Step {
        state: OptimizerState {
            t: state.t + 1,
            x,
            m: state.m.clone(),
            queries: state.queries + 2 * config.batch_size as u64,
        },
        estimate: est,
    })
}

/// Momentum warm start from `x0`: `m_0 = g_0`, `x_1 = x_0 - alpha g_0`.
pub fn warm_start<O: Oracle + ?Sized>(
    x0: &[f64],
    oracle: &O,
    config: &MomentumConfig,
    key: StreamKey,
) -> Result<Step, OptimizerError> {
    warm_start_with(x0, oracle, config, key, &UniformSphere)
}

pub fn warm_start_with<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
    x0: &[f64],
    oracle: &O,
    config: &MomentumConfig,
    key: StreamKey,
    source: &S,
) -> Result<Step, OptimizerError> {
    check_dim(oracle, x0)?;
    let est = estimate(
        oracle,
        x0,
        config.base.mu,
        config.warm_batch_size,
        config.warm_aggregation,
        key,
        source,
    )?;
    let mut x = x0.to_vec();
    vecops::axpy(-config.base.alpha, &est.g, &mut x);
    Ok(Step {
        state: OptimizerState {
            t: 1,
            x,
            m: Some(est.g.clone()),
            queries: 2 * config.warm_batch_size as u64,
        },
        estimate: est,
    })
}

/// `m <- beta m + (1 - beta) g`.
pub fn momentum_update(m: &mut [f64], g: &[f64], beta: f64) {
    debug_assert_eq!(m.len(), g.len());
    for (mi, gi) in m.iter_mut().zip(g) {
        *mi = beta * *mi + (1.0 - beta) * gi;
    }
}

/// One momentum iteration on a warm-started state.
pub fn momentum_step<O: Oracle + ?Sized>(
    state: &OptimizerState,
    oracle: &O,
    config: &MomentumConfig,
    key: StreamKey,
) -> Result<Step, OptimizerError> {
    momentum_step_with(state, oracle, config, key, &UniformSphere)
}

pub fn momentum_step_with<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
    state: &OptimizerState,
    oracle: &O,
    config: &MomentumConfig,
    key: StreamKey,
    source: &S,
) -> Result<Step, OptimizerError> {
    let m_prev = match (&state.m, state.t) {
        (Some(m), t) if t >= 1 => m,
        _ => return Err(OptimizerError::NotWarmStarted),
    };
    if state.t >= config.base.iterations {
        return Err(OptimizerError::BudgetExhausted {
            t: state.t,
            budget: config.base.iterations,
        });
    }
    check_dim(oracle, &state.x)?;
    let c = &config.base;
    let est = estimate(oracle, &state.x, c.mu, c.batch_size, c.aggregation, key, source)?;
    let mut m = m_prev.clone();
    momentum_update(&mut m, &est.g, config.beta);
    let mut x = state.x.clone();
    vecops::axpy(-c.alpha, &m, &mut x);
    Ok(Step {
        state: OptimizerState {
            t: state.t + 1,
            x,
            m: Some(m),
            queries: state.queries + 2 * c.batch_size as u64,
        },
        estimate: est,
    })
}

/// Per-iteration record of a run. Record `t` describes the iterate `x_t`
/// after the `t`-th update and the estimate that produced it (computed at
/// `x_{t-1}`).
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub x_norm: f64,
    /// `‖grad f(x_t)‖` from the reference channel, if provided.
    pub grad_norm: Option<f64>,
    /// `f(x_t) - f_*`, if a reference is provided.
    pub suboptimality: Option<f64>,
    /// Cosine between the estimate and `grad f(x_{t-1})`.
    pub cosine: Option<f64>,
    pub outlier_log_ratio: Option<f64>,
    pub clipped_count: usize,
    pub clipped_fraction: f64,
    pub queries: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RecordLevel {
    /// One record per iteration.
    #[default]
    Every,
    /// Only the last iterate (tuning).
    FinalOnly,
}

/// Hooks and guards for [`run`].
#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    /// Noiseless reference for diagnostics; never consulted by the updates.
    pub reference: Option<&'a dyn GradientReference>,
    pub record: RecordLevel,
    /// A run halts as diverged once `‖x_t‖` exceeds this value.
    pub divergence_threshold: f64,
}

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e9;

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            reference: None,
            record: RecordLevel::Every,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

impl<'a> RunOptions<'a> {
    pub fn with_reference(reference: &'a dyn GradientReference) -> Self {
        Self {
            reference: Some(reference),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// `‖x_t‖` exceeded the guard (or became non-finite) at iteration `t`;
    /// the state holds the last finite iterate.
    Diverged { t: u64 },
    /// An oracle or estimator failure; records up to the failure are kept.
    Aborted(OptimizerError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<StepRecord>,
    pub state: OptimizerState,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn final_record(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

fn make_record(
    state: &OptimizerState,
    prev_x: &[f64],
    est: &GradientEstimate,
    reference: Option<&dyn GradientReference>,
) -> StepRecord {
    let (grad_norm, suboptimality, cosine) = match reference {
        Some(r) => {
            let grad = r.gradient(&state.x);
            let prev_grad = r.gradient(prev_x);
            (
                Some(vecops::norm(&grad)),
                Some(r.value(&state.x) - r.min_value()),
                cosine_alignment(&est.g, &prev_grad),
            )
        }
        None => (None, None, None),
    };
    StepRecord {
        t: state.t,
        x_norm: vecops::norm(&state.x),
        grad_norm,
        suboptimality,
        cosine,
        outlier_log_ratio: outlier_ratio(&est.raw_scalars),
        clipped_count: est.clipped_count,
        clipped_fraction: est.clipped_fraction(),
        queries: state.queries,
    }
}

/// In-flight state of one run, advanced one iteration at a time.
struct CellRun<'c> {
    config: &'c OptimizerConfig,
    state: OptimizerState,
    records: Vec<StepRecord>,
    status: Option<RunStatus>,
}

impl<'c> CellRun<'c> {
    fn new(config: &'c OptimizerConfig, x0: &[f64]) -> Self {
        Self {
            config,
            state: OptimizerState::initial(x0.to_vec()),
            records: Vec::new(),
            status: None,
        }
    }

    fn done(&self) -> bool {
        self.status.is_some() || self.state.t >= self.config.iterations()
    }

    fn advance<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
        &mut self,
        oracle: &O,
        master_seed: u64,
        options: &RunOptions<'_>,
        source: &S,
    ) {
        if self.done() {
            return;
        }
        let t = self.state.t;
        let total = self.config.iterations();
        let step = match self.config {
            OptimizerConfig::Base(c) => base_step_with(&self.state, oracle, c, iteration_key(master_seed, t), source),
            OptimizerConfig::Momentum(c) if t == 0 => {
                warm_start_with(&self.state.x, oracle, c, warm_key(master_seed), &UniformSphere)
            }
            OptimizerConfig::Momentum(c) => {
                momentum_step_with(&self.state, oracle, c, iteration_key(master_seed, t), source)
            }
        };
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                self.status = Some(RunStatus::Aborted(e));
                return;
            }
        };
        if !vecops::all_finite(&step.state.x) {
            self.status = Some(RunStatus::Diverged { t: step.state.t });
            return;
        }
        let is_last = step.state.t == total;
        let diverged = vecops::norm(&step.state.x) > options.divergence_threshold;
        if options.record == RecordLevel::Every || is_last || diverged {
            self.records
                .push(make_record(&step.state, &self.state.x, &step.estimate, options.reference));
        }
        self.state = step.state;
        if diverged {
            self.status = Some(RunStatus::Diverged { t: self.state.t });
        }
    }

    fn finish(self) -> RunOutcome {
        RunOutcome {
            records: self.records,
            state: self.state,
            status: self.status.unwrap_or(RunStatus::Completed),
        }
    }
}

/// Runs `T` iterations from `x0` (warm start first for momentum) with keys
/// derived from `master_seed`.
pub fn run<O: Oracle + ?Sized>(
    oracle: &O,
    config: &OptimizerConfig,
    x0: &[f64],
    master_seed: u64,
    options: RunOptions<'_>,
) -> Result<RunOutcome, OptimizerError> {
    config.validate()?;
    check_dim(oracle, x0)?;
    let mut cell = CellRun::new(config, x0);
    while !cell.done() {
        cell.advance(oracle, master_seed, &options, &UniformSphere);
    }
    Ok(cell.finish())
}

/// Directions of one batch key computed once and replayed to several runs.
struct SharedBatchDirections {
    batch_key: StreamKey,
    dim: usize,
    rows: Vec<f64>,
}

impl SharedBatchDirections {
    fn new(batch_key: StreamKey, batch_size: usize, dim: usize) -> Self {
        let mut rows = vec![0.0; batch_size * dim];
        for (l, row) in rows.chunks_exact_mut(dim).enumerate() {
            UniformSphere.fill(direction_key(batch_key, l), l, row);
        }
        Self { batch_key, dim, rows }
    }
}

impl DirectionSource for SharedBatchDirections {
    fn fill(&self, key: StreamKey, index: usize, out: &mut [f64]) {
        let start = index * self.dim;
        if out.len() == self.dim && start + self.dim <= self.rows.len() && key == direction_key(self.batch_key, index) {
            out.copy_from_slice(&self.rows[start..start + self.dim]);
        } else {
            UniformSphere.fill(key, index, out);
        }
    }
}

/// Runs several configurations on the same seed in lockstep, sampling each
/// iteration's directions once. Directions depend only on the iteration key,
/// so every outcome is bit-identical to a separate [`run`] call; sharing only
/// saves the sphere sampling.
pub fn run_lockstep<O: Oracle + ?Sized>(
    oracle: &O,
    configs: &[OptimizerConfig],
    x0: &[f64],
    master_seed: u64,
    options: RunOptions<'_>,
) -> Result<Vec<RunOutcome>, OptimizerError> {
    check_dim(oracle, x0)?;
    for c in configs {
        c.validate()?;
    }
    let mut cells: Vec<CellRun> = configs.iter().map(|c| CellRun::new(c, x0)).collect();
    let mut t = 0u64;
    loop {
        let active: Vec<usize> = (0..cells.len()).filter(|&i| !cells[i].done()).collect();
        if active.is_empty() {
            break;
        }
        let shared_m = active
            .iter()
            .filter_map(|&i| match cells[i].config {
                OptimizerConfig::Base(c) => Some(c.batch_size),
                OptimizerConfig::Momentum(c) if t > 0 => Some(c.base.batch_size),
                OptimizerConfig::Momentum(_) => None,
            })
            .max()
            .unwrap_or(0);
        let shared = SharedBatchDirections::new(iteration_key(master_seed, t), shared_m, x0.len());
        for &i in &active {
            debug_assert_eq!(cells[i].state.t, t);
            cells[i].advance(oracle, master_seed, &options, &shared);
        }
        t += 1;
    }
    Ok(cells.into_iter().map(CellRun::finish).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{Direction, FixedDirections};
    use crate::oracle::{CountingOracle, NoiseModel, QuadraticProblem};

    fn base(alpha: f64, m: usize, agg: Aggregation, t: u64) -> BaseConfig {
        BaseConfig {
            alpha,
            mu: 1e-3,
            batch_size: m,
            aggregation: agg,
            iterations: t,
        }
    }

    fn momentum(cfg: BaseConfig, beta: f64, m0: usize) -> MomentumConfig {
        MomentumConfig {
            base: cfg,
            beta,
            warm_batch_size: m0,
            warm_aggregation: cfg.aggregation,
        }
    }

    #[test]
    fn zero_stepsize_is_a_null_step() {
        let q = QuadraticProblem::new(5, NoiseModel::sparse_pareto(1.5).unwrap(), 2.0);
        let s0 = OptimizerState::initial(q.x0.clone());
        let step = base_step(&s0, &q, &base(0.0, 4, Aggregation::Raw, 3), StreamKey::root(1)).unwrap();
        assert_eq!(step.state.x, q.x0);
        assert_eq!(step.state.queries, 8);
        assert_eq!(step.state.t, 1);
    }

    #[test]
    fn stationary_noiseless_origin() {
        let q = QuadraticProblem::new(4, NoiseModel::None, 0.0);
        let s0 = OptimizerState::initial(vec![0.0; 4]);
        let step = base_step(&s0, &q, &base(0.5, 8, Aggregation::Raw, 1), StreamKey::root(2)).unwrap();
        assert_eq!(step.state.x, vec![0.0; 4]);
        assert!(step.estimate.g.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn budget_is_enforced() {
        let q = QuadraticProblem::new(2, NoiseModel::None, 1.0);
        let mut s = OptimizerState::initial(q.x0.clone());
        s.t = 3;
        assert!(matches!(
            base_step(&s, &q, &base(0.1, 1, Aggregation::Raw, 3), StreamKey::root(0)),
            Err(OptimizerError::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn warm_start_with_forced_direction() {
        let d = 6;
        let q = QuadraticProblem::new(d, NoiseModel::None, 2.0);
        let u = Direction::from_vec(q.x0.clone()).unwrap();
        let alpha = 0.05;
        let cfg = momentum(base(alpha, 1, Aggregation::ScalarClip { tau: 1e12 }, 5), 0.9, 1);
        let step = warm_start_with(&q.x0, &q, &cfg, StreamKey::root(0), &FixedDirections(vec![u])).unwrap();
        // g0 = d ‖x0‖ u and x1 = x0 (1 - alpha d)
        assert!((step.estimate.g[0] - d as f64 * 2.0).abs() < 1e-9);
        assert!((step.state.x[0] - 2.0 * (1.0 - alpha * d as f64)).abs() < 1e-9);
        assert_eq!(step.state.m.as_deref(), Some(step.estimate.g.as_slice()));
        assert_eq!(step.state.queries, 2);
        assert_eq!(step.state.t, 1);
    }

    #[test]
    fn warm_start_trivial_cases() {
        let q = QuadraticProblem::new(3, NoiseModel::sparse_pareto(1.5).unwrap(), 1.0);
        let cfg = momentum(base(0.0, 2, Aggregation::ScalarClip { tau: 3.0 }, 4), 0.5, 7);
        let step = warm_start(&q.x0, &q, &cfg, StreamKey::root(3)).unwrap();
        assert_eq!(step.state.x, q.x0);
        assert_eq!(step.state.m.unwrap(), step.estimate.g);
        assert_eq!(step.state.queries, 14);

        let zero = QuadraticProblem::new(3, NoiseModel::None, 0.0);
        let cfg = momentum(base(0.3, 2, Aggregation::ScalarClip { tau: 3.0 }, 4), 0.5, 7);
        let step = warm_start(&zero.x0, &zero, &cfg, StreamKey::root(3)).unwrap();
        assert_eq!(step.state.x, vec![0.0; 3]);
        assert!(step.estimate.g.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn momentum_unrolled_recursion() {
        // m0 = 0 (test override), g = e1 constant
        let mut m = vec![0.0, 0.0];
        for _ in 0..3 {
            momentum_update(&mut m, &[1.0, 0.0], 0.9);
        }
        assert!((m[0] - (1.0 - 0.9f64.powi(3))).abs() < 1e-15);
        assert!((m[0] - 0.271).abs() < 1e-12);

        // geometric convergence to a constant g
        let c = [2.0, -1.0];
        let mut m = vec![5.0, 5.0];
        let gap0 = vecops::norm(&[3.0, 6.0]);
        for t in 1..=10 {
            momentum_update(&mut m, &c, 0.7);
            let gap = vecops::norm(&[m[0] - c[0], m[1] - c[1]]);
            assert!((gap - 0.7f64.powi(t) * gap0).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_step_requires_warm_start() {
        let q = QuadraticProblem::new(2, NoiseModel::None, 1.0);
        let cfg = momentum(base(0.1, 1, Aggregation::Raw, 4), 0.5, 1);
        let s0 = OptimizerState::initial(q.x0.clone());
        assert_eq!(
            momentum_step(&s0, &q, &cfg, StreamKey::root(0)),
            Err(OptimizerError::NotWarmStarted)
        );
    }

    #[test]
    fn beta_zero_matches_base() {
        let q = QuadraticProblem::new(8, NoiseModel::sparse_pareto(1.5).unwrap(), 3.0);
        let agg = Aggregation::ScalarClip { tau: 0.5 };
        let b = base(0.02, 16, agg, 20);
        let mc = momentum(b, 0.0, 16);
        let seed = 9;
        // identical keys: warm start uses the warm key for both
        let mut sb = base_step(&OptimizerState::initial(q.x0.clone()), &q, &b, warm_key(seed)).unwrap().state;
        let mut sm = warm_start(&q.x0, &q, &mc, warm_key(seed)).unwrap().state;
        assert_eq!(sb.x, sm.x);
        for t in 1..20 {
            sb = base_step(&sb, &q, &b, iteration_key(seed, t)).unwrap().state;
            sm = momentum_step(&sm, &q, &mc, iteration_key(seed, t)).unwrap().state;
            assert_eq!(sb.x, sm.x);
            assert_eq!(sb.queries, sm.queries);
        }
    }

    #[test]
    fn run_query_accounting_and_records() {
        let q = CountingOracle::new(QuadraticProblem::new(5, NoiseModel::sparse_pareto(1.8).unwrap(), 3.0));
        let cfg = OptimizerConfig::Base(base(0.05, 7, Aggregation::ScalarClip { tau: 1.0 }, 11));
        let out = run(&q, &cfg, &q.inner().x0, 4, RunOptions::with_reference(q.inner())).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(q.count(), 2 * 7 * 11);
        assert_eq!(out.records.len(), 11);
        assert_eq!(out.records.last().unwrap().queries, 2 * 7 * 11);
        assert!(out.records.windows(2).all(|w| w[1].queries > w[0].queries));

        q.reset();
        let mcfg = OptimizerConfig::Momentum(momentum(base(0.05, 3, Aggregation::ScalarClip { tau: 1.0 }, 9), 0.8, 20));
        let out = run(&q, &mcfg, &q.inner().x0, 4, RunOptions::default()).unwrap();
        assert_eq!(q.count(), 2 * 20 + 2 * 3 * 8);
        assert_eq!(out.state.queries, mcfg.total_queries());
    }

    #[test]
    fn lockstep_matches_separate_runs() {
        let q = QuadraticProblem::new(12, NoiseModel::sparse_pareto(1.5).unwrap(), 3.0);
        let b = |alpha, agg| base(alpha, 16, agg, 30);
        let configs = vec![
            OptimizerConfig::Base(b(0.01, Aggregation::Raw)),
            OptimizerConfig::Base(b(5.0, Aggregation::Raw)),
            OptimizerConfig::Base(b(0.02, Aggregation::VectorClip { radius: 2.0 })),
            OptimizerConfig::Base(b(0.05, Aggregation::ScalarClip { tau: 0.3 })),
            OptimizerConfig::Base(base(0.05, 8, Aggregation::ScalarClip { tau: 0.3 }, 12)),
            OptimizerConfig::Momentum(momentum(b(0.05, Aggregation::ScalarClip { tau: 0.3 }), 0.7, 40)),
        ];
        let opts = RunOptions::with_reference(&q);
        let together = run_lockstep(&q, &configs, &q.x0, 21, opts).unwrap();
        for (c, out) in configs.iter().zip(&together) {
            assert_eq!(&run(&q, c, &q.x0, 21, opts).unwrap(), out);
        }
    }

    #[test]
    fn empty_budget_gives_no_records() {
        let q = QuadraticProblem::new(3, NoiseModel::None, 1.0);
        let cfg = OptimizerConfig::Base(base(0.1, 2, Aggregation::Raw, 0));
        let out = run(&q, &cfg, &q.x0, 0, RunOptions::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.state.x, q.x0);
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let q = QuadraticProblem::new(10, NoiseModel::sparse_pareto(1.2).unwrap(), 3.0);
        let cfg = OptimizerConfig::Base(base(0.01, 32, Aggregation::VectorClip { radius: 2.0 }, 50));
        let a = run(&q, &cfg, &q.x0, 17, RunOptions::with_reference(&q)).unwrap();
        let b = run(&q, &cfg, &q.x0, 17, RunOptions::with_reference(&q)).unwrap();
        assert_eq!(a, b);
        let c = run(&q, &cfg, &q.x0, 18, RunOptions::with_reference(&q)).unwrap();
        assert_ne!(a.state.x, c.state.x);
    }

    #[test]
    fn noiseless_contraction() {
        let q = QuadraticProblem::new(10, NoiseModel::None, 3.0);
        let cfg = OptimizerConfig::Base(base(0.5, 64, Aggregation::ScalarClip { tau: 1e6 }, 40));
        for seed in 0..10 {
            let out = run(&q, &cfg, &q.x0, seed, RunOptions::with_reference(&q)).unwrap();
            let last = out.final_record().unwrap();
            assert!(last.x_norm < 1e-2, "seed {seed}: {}", last.x_norm);
        }
    }

    #[test]
    fn divergence_guard_halts() {
        let q = QuadraticProblem::new(4, NoiseModel::None, 1.0);
        // alpha = 1 with d = 4, M = 1: x <- x - 4<x,u>u can blow up
        let cfg = OptimizerConfig::Base(base(10.0, 1, Aggregation::Raw, 1000));
        let out = run(&q, &cfg, &q.x0, 1, RunOptions::default()).unwrap();
        assert!(matches!(out.status, RunStatus::Diverged { .. }));
        assert!(out.records.len() < 1000);
        assert!(vecops::all_finite(&out.state.x));
    }

    #[test]
    fn gradient_bound_from_suboptimality_is_tight() {
        let q = QuadraticProblem::new(6, NoiseModel::sparse_pareto(1.5).unwrap(), 3.0);
        let cfg = OptimizerConfig::Base(base(0.02, 8, Aggregation::ScalarClip { tau: 0.5 }, 30));
        let out = run(&q, &cfg, &q.x0, 2, RunOptions::with_reference(&q)).unwrap();
        for r in &out.records {
            let g2 = r.grad_norm.unwrap().powi(2);
            let rhs = 2.0 * q.smoothness() * r.suboptimality.unwrap();
            assert!(g2 <= rhs * (1.0 + 1e-12) && (g2 - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
    }

    #[test]
    fn aborted_run_keeps_records() {
        struct Flaky(QuadraticProblem, std::sync::atomic::AtomicU64);
        impl Oracle for Flaky {
            fn dim(&self) -> usize {
                self.0.dim
            }
            fn evaluate(&self, x: &[f64], key: crate::oracle::SampleKey) -> Result<f64, crate::oracle::OracleError> {
                if self.1.fetch_add(1, std::sync::atomic::Ordering::Relaxed) >= 20 {
                    return Err(crate::oracle::OracleError::Exited { key });
                }
                self.0.evaluate(x, key)
            }
        }
        let q = QuadraticProblem::new(3, NoiseModel::None, 1.0);
        let flaky = Flaky(q.clone(), Default::default());
        let cfg = OptimizerConfig::Base(base(0.1, 2, Aggregation::Raw, 100));
        let out = run(&flaky, &cfg, &q.x0, 0, RunOptions::default()).unwrap();
        assert!(matches!(out.status, RunStatus::Aborted(_)));
        assert_eq!(out.records.len(), 5);
    }
}
