//! Experiment configuration: a flat `key = value` text format.
//!
//! Lists are comma-separated, `#` starts a comment, and unknown keys are
//! rejected.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::oracle::{NoiseModel, QuadraticProblem};
use crate::planner;
use crate::record::Method;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Noise family named in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseFamily {
    None,
    SparsePareto,
    WeakL2,
}

impl NoiseFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseFamily::None => "none",
            NoiseFamily::SparsePareto => "sparse_pareto",
            NoiseFamily::WeakL2 => "weak_l2",
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(NoiseFamily::None),
            "sparse_pareto" => Ok(NoiseFamily::SparsePareto),
            "weak_l2" => Ok(NoiseFamily::WeakL2),
            other => Err(format!("unknown noise family {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    // problem
    pub d: usize,
    pub noise: NoiseFamily,
    pub p: f64,
    pub sigma_scale: f64,
    pub x0_norm: f64,
    pub mu: f64,
    // comparison
    pub methods: Vec<Method>,
    pub batch_size: usize,
    pub eps: f64,
    pub iter_budget: u64,
    pub stepsize_grid: Vec<f64>,
    /// Multipliers of the theory threshold scale when `tau_grid_relative`,
    /// absolute thresholds otherwise.
    pub tau_grid: Vec<f64>,
    pub tau_grid_relative: bool,
    pub rvec_grid: Vec<f64>,
    pub validation_seeds: u64,
    pub evaluation_seeds: u64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Confidence level used for the theory threshold scale.
    pub delta: f64,
    pub divergence_threshold: f64,
    // momentum
    pub momentum_beta: f64,
    pub momentum_t_cap: u64,
    // direction probe
    pub probe_points: usize,
    pub probe_norm: f64,
    // sweeps
    pub sweep_dims: Vec<usize>,
    pub sweep_tails: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 100,
            noise: NoiseFamily::SparsePareto,
            p: 1.5,
            sigma_scale: 1.0,
            x0_norm: 3.0,
            mu: 1e-3,
            methods: vec![Method::Raw, Method::VectorClip, Method::ScalarClip],
            batch_size: 256,
            eps: 0.1,
            iter_budget: 1000,
            stepsize_grid: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2],
            tau_grid: vec![1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0],
            tau_grid_relative: true,
            rvec_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            validation_seeds: 6,
            evaluation_seeds: 20,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            delta: 0.05,
            divergence_threshold: crate::optimizer::DEFAULT_DIVERGENCE_THRESHOLD,
            momentum_beta: 0.9,
            momentum_t_cap: 200_000,
            probe_points: 200,
            probe_norm: 1.0,
            sweep_dims: vec![25, 50, 100, 200],
            sweep_tails: vec![1.2, 1.5, 1.8, 2.5],
        }
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_one<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 26] = [
        "d",
        "noise",
        "p",
        "sigma_scale",
        "x0_norm",
        "mu",
        "methods",
        "M",
        "eps",
        "iter_budget",
        "stepsize_grid",
        "tau_grid",
        "tau_grid_relative",
        "rvec_grid",
        "validation_seeds",
        "evaluation_seeds",
        "master_seed",
        "output_dir",
        "delta",
        "divergence_threshold",
        "momentum_beta",
        "momentum_t_cap",
        "probe_points",
        "probe_norm",
        "sweep_dims",
        "sweep_tails",
    ];

    /// Parses a configuration, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || !Self::KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value).map_err(|message| ConfigError::Value {
                line,
                key: key.to_string(),
                message,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "d" => self.d = parse_one(v)?,
            "noise" => self.noise = parse_one(v)?,
            "p" => self.p = parse_one(v)?,
            "sigma_scale" => self.sigma_scale = parse_one(v)?,
            "x0_norm" => self.x0_norm = parse_one(v)?,
            "mu" => self.mu = parse_one(v)?,
            "methods" => self.methods = parse_list(v)?,
            "M" => self.batch_size = parse_one(v)?,
            "eps" => self.eps = parse_one(v)?,
            "iter_budget" => self.iter_budget = parse_one(v)?,
            "stepsize_grid" => self.stepsize_grid = parse_list(v)?,
            "tau_grid" => self.tau_grid = parse_list(v)?,
            "tau_grid_relative" => self.tau_grid_relative = parse_one(v)?,
            "rvec_grid" => self.rvec_grid = parse_list(v)?,
            "validation_seeds" => self.validation_seeds = parse_one(v)?,
            "evaluation_seeds" => self.evaluation_seeds = parse_one(v)?,
            "master_seed" => self.master_seed = parse_one(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "delta" => self.delta = parse_one(v)?,
            "divergence_threshold" => self.divergence_threshold = parse_one(v)?,
            "momentum_beta" => self.momentum_beta = parse_one(v)?,
            "momentum_t_cap" => self.momentum_t_cap = parse_one(v)?,
            "probe_points" => self.probe_points = parse_one(v)?,
            "probe_norm" => self.probe_norm = parse_one(v)?,
            "sweep_dims" => self.sweep_dims = parse_list(v)?,
            "sweep_tails" => self.sweep_tails = parse_list(v)?,
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if self.d == 0 || self.batch_size == 0 || self.iter_budget == 0 {
            return bad("d, M and iter_budget must be positive");
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if !(self.mu > 0.0 && self.eps > 0.0 && self.delta > 0.0 && self.delta <= 1.0) {
            return bad("mu and eps must be positive, delta in (0, 1]");
        }
        if !(self.x0_norm >= 0.0 && self.sigma_scale > 0.0 && self.divergence_threshold > 0.0) {
            return bad("x0_norm must be nonnegative, sigma_scale and divergence_threshold positive");
        }
        if self.noise == NoiseFamily::SparsePareto && !(self.p > 1.0) {
            return bad("sparse Pareto noise needs p > 1");
        }
        if self.stepsize_grid.is_empty() || !positive(&self.stepsize_grid) {
            return bad("stepsize_grid must be nonempty and positive");
        }
        let wants_tau = self
            .methods
            .iter()
            .any(|m| matches!(m, Method::ScalarClip | Method::ScalarClipMomentum));
        if wants_tau && (self.tau_grid.is_empty() || !positive(&self.tau_grid)) {
            return bad("tau_grid must be nonempty and positive for scalar clipping");
        }
        if self.methods.contains(&Method::VectorClip) && (self.rvec_grid.is_empty() || !positive(&self.rvec_grid)) {
            return bad("rvec_grid must be nonempty and positive for vector clipping");
        }
        if self.validation_seeds == 0 || self.evaluation_seeds == 0 {
            return bad("validation_seeds and evaluation_seeds must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return bad("momentum_beta must lie in [0, 1)");
        }
        Ok(())
    }

    /// Serializes every key, so `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("d", self.d.to_string());
        kv("noise", self.noise.as_str().into());
        kv("p", self.p.to_string());
        kv("sigma_scale", self.sigma_scale.to_string());
        kv("x0_norm", self.x0_norm.to_string());
        kv("mu", self.mu.to_string());
        kv("methods", methods.join(", "));
        kv("M", self.batch_size.to_string());
        kv("eps", self.eps.to_string());
        kv("iter_budget", self.iter_budget.to_string());
        kv("stepsize_grid", join(&self.stepsize_grid));
        kv("tau_grid", join(&self.tau_grid));
        kv("tau_grid_relative", self.tau_grid_relative.to_string());
        kv("rvec_grid", join(&self.rvec_grid));
        kv("validation_seeds", self.validation_seeds.to_string());
        kv("evaluation_seeds", self.evaluation_seeds.to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("delta", self.delta.to_string());
        kv("divergence_threshold", self.divergence_threshold.to_string());
        kv("momentum_beta", self.momentum_beta.to_string());
        kv("momentum_t_cap", self.momentum_t_cap.to_string());
        kv("probe_points", self.probe_points.to_string());
        kv("probe_norm", self.probe_norm.to_string());
        kv("sweep_dims", join(&self.sweep_dims));
        kv("sweep_tails", join(&self.sweep_tails));
        s
    }

    pub fn noise_model(&self) -> NoiseModel {
        match self.noise {
            NoiseFamily::None => NoiseModel::None,
            NoiseFamily::SparsePareto => NoiseModel::SparsePareto {
                p: self.p,
                scale: self.sigma_scale,
            },
            NoiseFamily::WeakL2 => NoiseModel::WeakL2,
        }
    }

    pub fn problem(&self) -> QuadraticProblem {
        QuadraticProblem::new(self.d, self.noise_model(), self.x0_norm)
    }

    /// Tail exponent used for threshold scaling (2 for the noiseless and
    /// weak-L2 problems).
    pub fn tail_exponent(&self) -> f64 {
        self.noise_model().tail_exponent().unwrap_or(2.0)
    }

    /// Theory threshold scale `S_mu (M/λ)^(1/p)` with
    /// `λ = ln(T_theory/δ)`, `T_theory = max(3, ⌈32 L Δ̄0 / ε²⌉)`, `L = 1`.
    pub fn theory_tau_scale(&self) -> f64 {
        let problem = self.problem();
        let bar = planner::bar_delta0(1.0, problem.initial_gap(), self.mu);
        let s = planner::s_mu(1.0, bar, problem.noise.sigma(), self.d, self.mu);
        let t_theory = (32.0 * bar / (self.eps * self.eps)).ceil().max(3.0);
        let lambda = (t_theory / self.delta).ln();
        let ratio = self.batch_size as f64 / lambda;
        s * ratio.powf(1.0 / self.tail_exponent())
    }

    /// Absolute scalar-clipping thresholds.
    pub fn tau_values(&self) -> Vec<f64> {
        if self.tau_grid_relative {
            let scale = self.theory_tau_scale();
            self.tau_grid.iter().map(|m| m * scale).collect()
        } else {
            self.tau_grid.clone()
        }
    }
}
