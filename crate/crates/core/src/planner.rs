//! Theory-prescribed parameters for the base and momentum methods.
//!
//! Notation: `Δ̄0 = Δ0 + Lμ²/2`, `S_μ = (√(LΔ̄0) + σ)/√d + Lμ`,
//! `C_p = 120 + 2^(4-p)/(p-1)`, and for a ratio `s = M/λ` the deviation level
//!
//! ```text
//! η0 = C_p d S_μ s^(-(p-1)/p) sqrt(1 + ln s),   η = η0 + Lμ.
//! ```
//!
//! Batch sizes are the smallest integers meeting `η <= ε/4` (the theory only
//! fixes their order), found by doubling and bisection. The momentum method
//! reuses the base constant `C_p` with the ratios `M/((1-β)λ)` and `M0/λ0`;
//! its plans are therefore labelled constant-approximate. All logarithms are
//! natural.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid planner input: {0}")]
    Invalid(String),
    #[error(
        "no {which} batch size up to {ceiling} meets eta <= eps/4 = {target:.6e}; eta at the ceiling is {limiting_eta:.6e}"
    )]
    Infeasible {
        which: &'static str,
        ceiling: u128,
        target: f64,
        limiting_eta: f64,
    },
    #[error("{0} overflows the planner's integer range")]
    Overflow(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `μ = ε/(4 L d)`.
    Auto,
    Fixed(f64),
}

pub const DEFAULT_M_CEILING: u128 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerInputs {
    pub l: f64,
    pub delta0: f64,
    pub sigma: f64,
    pub p: f64,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub mu: Smoothing,
    pub beta: Option<f64>,
    /// Largest batch size the search may return.
    pub m_ceiling: u128,
}

impl PlannerInputs {
    pub fn new(l: f64, delta0: f64, sigma: f64, p: f64, d: usize, eps: f64, delta: f64) -> Self {
        Self {
            l,
            delta0,
            sigma,
            p,
            d,
            eps,
            delta,
            mu: Smoothing::Auto,
            beta: None,
            m_ceiling: DEFAULT_M_CEILING,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Smoothing::Fixed(mu);
        self
    }

    pub fn with_ceiling(mut self, ceiling: u128) -> Self {
        self.m_ceiling = ceiling;
        self
    }

    pub fn mu_value(&self) -> f64 {
        match self.mu {
            Smoothing::Auto => self.eps / (4.0 * self.l * self.d as f64),
            Smoothing::Fixed(mu) => mu,
        }
    }

    fn validate(&self) -> Result<(), PlannerError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PlannerError::Invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("L", self.l)?;
        positive("eps", self.eps)?;
        positive("delta", self.delta)?;
        positive("mu", self.mu_value())?;
        if !(self.delta0 >= 0.0 && self.delta0.is_finite()) {
            return Err(PlannerError::Invalid(format!("Delta0 must be >= 0, got {}", self.delta0)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(PlannerError::Invalid(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.p > 1.0 && self.p <= 2.0) {
            return Err(PlannerError::Invalid(format!("tail exponent p must lie in (1, 2], got {}", self.p)));
        }
        if self.d == 0 {
            return Err(PlannerError::Invalid("dimension must be positive".into()));
        }
        if self.delta > 1.0 {
            return Err(PlannerError::Invalid(format!("delta must be <= 1, got {}", self.delta)));
        }
        if self.m_ceiling == 0 {
            return Err(PlannerError::Invalid("batch-size ceiling must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanVariant {
    Base,
    /// Momentum plan; batch sizes use the base constant `C_p`.
    MomentumConstantApproximate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedParams {
    pub variant: PlanVariant,
    pub mu: f64,
    pub bar_delta0: f64,
    pub s_mu: f64,
    pub c_p: f64,
    pub lambda: f64,
    pub lambda0: Option<f64>,
    pub alpha: f64,
    pub t: u128,
    pub tau: f64,
    pub tau0: Option<f64>,
    pub m_required: u128,
    pub m0_required: Option<u128>,
    pub beta: Option<f64>,
    /// `1 - β`, kept separately because `β` rounds to 1 in the small-batch
    /// regime.
    pub one_minus_beta: Option<f64>,
    /// `η0` at the running batch size.
    pub eta0: f64,
    pub eta: f64,
    /// `η0` at the warm-start batch size (momentum).
    pub eta0_warm: Option<f64>,
    pub predicted_queries: u128,
    pub trivial_regime: bool,
}

pub fn c_p(p: f64) -> f64 {
    120.0 + 2f64.powf(4.0 - p) / (p - 1.0)
}

pub fn bar_delta0(l: f64, delta0: f64, mu: f64) -> f64 {
    delta0 + l * mu * mu / 2.0
}

pub fn s_mu(l: f64, bar_delta0: f64, sigma: f64, d: usize, mu: f64) -> f64 {
    ((l * bar_delta0).sqrt() + sigma) / (d as f64).sqrt() + l * mu
}

/// `η0` as a function of the ratio `s = M / λ` (or its momentum analogues).
pub fn eta0_at_ratio(c_p: f64, d: usize, s_mu: f64, p: f64, ratio: f64) -> f64 {
    c_p * d as f64 * s_mu * ratio.powf(-(p - 1.0) / p) * (1.0 + ratio.ln()).sqrt()
}

/// Ratio beyond which `η0` decreases: `exp(max(0, p/(2(p-1)) - 1))`.
/// For `p < 2`, `η0` first increases on `[1, r*]`; `r* > e` once `p < 4/3`.
pub fn eta0_turning_ratio(p: f64) -> f64 {
    (p / (2.0 * (p - 1.0)) - 1.0).max(0.0).exp()
}

/// Clipping threshold `8 S_μ r^(1/p)` for a batch-to-log ratio `r`
/// (`M/λ`, `M/((1-β)λ)` or `M0/λ0`).
pub fn clip_threshold(s_mu: f64, ratio: f64, p: f64) -> f64 {
    8.0 * s_mu * ratio.powf(1.0 / p)
}

pub fn trivial_regime(l: f64, bar_delta0: f64, eps: f64) -> bool {
    eps * eps > 32.0 * l * bar_delta0
}

fn ceil_to_u128(v: f64, what: &'static str) -> Result<u128, PlannerError> {
    if !v.is_finite() || v >= 2f64.powi(120) {
        return Err(PlannerError::Overflow(what));
    }
    Ok(v.ceil().max(0.0) as u128)
}

struct Chain {
    mu: f64,
    bar_delta0: f64,
    s_mu: f64,
    c_p: f64,
    lmu: f64,
    quarter_eps: f64,
}

impl Chain {
    fn new(inputs: &PlannerInputs) -> Self {
        let mu = inputs.mu_value();
        let bar = bar_delta0(inputs.l, inputs.delta0, mu);
        Self {
            mu,
            bar_delta0: bar,
            s_mu: s_mu(inputs.l, bar, inputs.sigma, inputs.d, mu),
            c_p: c_p(inputs.p),
            lmu: inputs.l * mu,
            quarter_eps: inputs.eps / 4.0,
        }
    }

    fn eta0(&self, inputs: &PlannerInputs, m: u128, scale: f64) -> f64 {
        eta0_at_ratio(self.c_p, inputs.d, self.s_mu, inputs.p, m as f64 / scale)
    }

    fn feasible(&self, inputs: &PlannerInputs, m: u128, scale: f64) -> bool {
        self.eta0(inputs, m, scale) + self.lmu <= self.quarter_eps
    }

    /// Smallest integer `M >= max(1, scale)` with `η0(M/scale) + Lμ <= ε/4`.
    fn min_batch(&self, inputs: &PlannerInputs, scale: f64, which: &'static str) -> Result<u128, PlannerError> {
        let ceiling = inputs.m_ceiling;
        let lo = ceil_to_u128(scale, which)?.max(1);
        let infeasible = |limit_m: u128| PlannerError::Infeasible {
            which,
            ceiling,
            target: inputs.eps / 4.0,
            limiting_eta: self.eta0(inputs, limit_m.max(lo), scale) + inputs.l * self.mu,
        };
        if lo > ceiling || self.lmu >= self.quarter_eps {
            return Err(infeasible(ceiling));
        }
        let ok = |m: u128| self.feasible(inputs, m, scale);
        if ok(lo) {
            return Ok(lo);
        }
        // η0 rises on [scale, r* scale] and falls afterwards; every M in the
        // rising part is at least η0(lo) and so fails as well.
        let turning = ceil_to_u128(eta0_turning_ratio(inputs.p) * scale, which)?;
        let mut bad = lo.max(turning.saturating_sub(1));
        let mut good = bad.max(1);
        while !ok(good) {
            bad = good;
            if good >= ceiling {
                return Err(infeasible(ceiling));
            }
            good = good.saturating_mul(2).min(ceiling);
        }
        while good - bad > 1 {
            let mid = bad + (good - bad) / 2;
            if ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    }
}

/// Parameters of the base method (`β = 0`).
pub fn plan_base(inputs: &PlannerInputs) -> Result<PlannedParams, PlannerError> {
    inputs.validate()?;
    if inputs.beta.is_some() {
        return Err(PlannerError::Invalid("plan_base takes no momentum parameter".into()));
    }
    let ch = Chain::new(inputs);
    let l = inputs.l;
    let t = ceil_to_u128(32.0 * l * ch.bar_delta0 / (inputs.eps * inputs.eps), "iteration count")?.max(3);
    let lambda = (t as f64 / inputs.delta).ln();
    let m = ch.min_batch(inputs, lambda, "running")?;
    let eta0 = ch.eta0(inputs, m, lambda);
    let tau = clip_threshold(ch.s_mu, m as f64 / lambda, inputs.p);
    let predicted_queries = m
        .checked_mul(t)
        .and_then(|v| v.checked_mul(2))
        .ok_or(PlannerError::Overflow("query count"))?;
    Ok(PlannedParams {
        variant: PlanVariant::Base,
        mu: ch.mu,
        bar_delta0: ch.bar_delta0,
        s_mu: ch.s_mu,
        c_p: ch.c_p,
        lambda,
        lambda0: None,
        alpha: 1.0 / (4.0 * l),
        t,
        tau,
        tau0: None,
        m_required: m,
        m0_required: None,
        beta: None,
        one_minus_beta: None,
        eta0,
        eta: eta0 + l * ch.mu,
        eta0_warm: None,
        predicted_queries,
        trivial_regime: trivial_regime(l, ch.bar_delta0, inputs.eps),
    })
}

/// Momentum schedule quantities that depend only on `1 - β`.
struct MomentumSchedule {
    t: u128,
    lambda: f64,
}

fn momentum_schedule(inputs: &PlannerInputs, bar: f64, one_minus_beta: f64) -> Result<MomentumSchedule, PlannerError> {
    let t = ceil_to_u128(
        512.0 * 3f64.sqrt() * inputs.l * bar / (one_minus_beta * inputs.eps * inputs.eps),
        "iteration count",
    )?
    .checked_add(2)
    .ok_or(PlannerError::Overflow("iteration count"))?;
    let lambda = (2.0 * t as f64 / inputs.delta).ln();
    Ok(MomentumSchedule { t, lambda })
}

fn check_momentum_mu(inputs: &PlannerInputs, mu: f64) -> Result<(), PlannerError> {
    let limit = inputs.eps / (4.0 * inputs.l * inputs.d as f64);
    // Auto mode sits exactly on the limit.
    if mu > limit * (1.0 + 1e-12) {
        return Err(PlannerError::Invalid(format!(
            "momentum plans require mu <= eps/(4 L d) = {limit:e}, got {mu:e}"
        )));
    }
    Ok(())
}

fn plan_momentum_with(inputs: &PlannerInputs, one_minus_beta: f64) -> Result<PlannedParams, PlannerError> {
    let ch = Chain::new(inputs);
    check_momentum_mu(inputs, ch.mu)?;
    let l = inputs.l;
    let sched = momentum_schedule(inputs, ch.bar_delta0, one_minus_beta)?;
    let lambda = sched.lambda;
    let lambda0 = (2.0 / inputs.delta).ln();
    let running_scale = one_minus_beta * lambda;
    let m = ch.min_batch(inputs, running_scale, "running")?;
    let m0 = ch.min_batch(inputs, lambda0, "warm-start")?;
    let eta0 = ch.eta0(inputs, m, running_scale);
    let predicted_queries = m
        .checked_mul(sched.t - 1)
        .and_then(|v| v.checked_add(m0))
        .and_then(|v| v.checked_mul(2))
        .ok_or(PlannerError::Overflow("query count"))?;
    Ok(PlannedParams {
        variant: PlanVariant::MomentumConstantApproximate,
        mu: ch.mu,
        bar_delta0: ch.bar_delta0,
        s_mu: ch.s_mu,
        c_p: ch.c_p,
        lambda,
        lambda0: Some(lambda0),
        alpha: one_minus_beta / (16.0 * 3f64.sqrt() * l),
        t: sched.t,
        tau: clip_threshold(ch.s_mu, m as f64 / running_scale, inputs.p),
        tau0: Some(clip_threshold(ch.s_mu, m0 as f64 / lambda0, inputs.p)),
        m_required: m,
        m0_required: Some(m0),
        beta: Some(1.0 - one_minus_beta),
        one_minus_beta: Some(one_minus_beta),
        eta0,
        eta: eta0 + l * ch.mu,
        eta0_warm: Some(ch.eta0(inputs, m0, lambda0)),
        predicted_queries,
        trivial_regime: trivial_regime(l, ch.bar_delta0, inputs.eps),
    })
}

/// Parameters of the momentum method for the given `β ∈ [1/2, 1)`.
pub fn plan_momentum(inputs: &PlannerInputs) -> Result<PlannedParams, PlannerError> {
    inputs.validate()?;
    let beta = inputs
        .beta
        .ok_or_else(|| PlannerError::Invalid("plan_momentum needs beta".into()))?;
    if !(0.5..1.0).contains(&beta) {
        return Err(PlannerError::Invalid(format!(
            "momentum theory covers beta in [1/2, 1), got {beta}"
        )));
    }
    plan_momentum_with(inputs, 1.0 - beta)
}

/// Momentum plan whose running batch size is at most `target_m`, with the
/// largest such `1 - β ∈ (0, 1/2]`. Solved by bisection on `ln(1 - β)`.
pub fn plan_momentum_small_batch(inputs: &PlannerInputs, target_m: u128) -> Result<PlannedParams, PlannerError> {
    inputs.validate()?;
    if target_m == 0 {
        return Err(PlannerError::Invalid("target batch size must be positive".into()));
    }
    let ch = Chain::new(inputs);
    check_momentum_mu(inputs, ch.mu)?;
    let probe = PlannerInputs {
        m_ceiling: target_m,
        ..*inputs
    };
    let fits = |omb: f64| -> Result<bool, PlannerError> {
        let sched = momentum_schedule(inputs, ch.bar_delta0, omb)?;
        match ch.min_batch(&probe, omb * sched.lambda, "running") {
            Ok(m) => Ok(m <= target_m),
            Err(PlannerError::Infeasible { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let mut hi = 0.5f64.ln();
    if !fits(0.5)? {
        // Find a small enough 1 - β by decades, then bisect.
        let mut lo = hi;
        loop {
            lo -= std::f64::consts::LN_10;
            if lo < -700.0 {
                return Err(PlannerError::Overflow("1 - beta"));
            }
            match fits(lo.exp()) {
                Ok(true) => break,
                Ok(false) => hi = lo,
                Err(PlannerError::Overflow(_)) => return Err(PlannerError::Overflow("iteration count")),
                Err(e) => return Err(e),
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if fits(mid.exp())? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi = lo;
    }
    let params = plan_momentum_with(inputs, hi.exp())?;
    debug_assert!(params.m_required <= target_m);
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub total_queries: u128,
    /// Exponent `a` in `ε^-a`: `(3p - 2)/(p - 1)`.
    pub eps_exponent: f64,
    /// Exponent `b` in `d^b`: `p/(2(p - 1))`.
    pub d_exponent: f64,
    /// Set for `p <= 1.05`, where both exponents blow up.
    pub near_singular: bool,
}

pub const NEAR_SINGULAR_P: f64 = 1.05;

pub fn complexity_exponents(p: f64) -> (f64, f64) {
    ((3.0 * p - 2.0) / (p - 1.0), p / (2.0 * (p - 1.0)))
}

pub fn predicted_complexity(params: &PlannedParams, inputs: &PlannerInputs) -> ComplexityReport {
    let (eps_exponent, d_exponent) = complexity_exponents(inputs.p);
    ComplexityReport {
        total_queries: params.predicted_queries,
        eps_exponent,
        d_exponent,
        near_singular: inputs.p <= NEAR_SINGULAR_P,
    }
}

impl std::fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "queries {} ~ eps^-{} d^{}",
            self.total_queries,
            fmt_exponent(self.eps_exponent),
            fmt_exponent(self.d_exponent)
        )?;
        if self.near_singular {
            write!(f, " (near-singular: p <= {NEAR_SINGULAR_P})")?;
        }
        Ok(())
    }
}

fn fmt_exponent(v: f64) -> String {
    if (v - v.round()).abs() < 1e-12 {
        format!("{}", v.round())
    } else {
        format!("{v:.4}")
    }
}

impl PlannedParams {
    /// Aligned `key value` lines.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_else(|| "-".into());
        let opt_u = |v: Option<u128>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
        let rows: Vec<(&str, String)> = vec![
            (
                "variant",
                match self.variant {
                    PlanVariant::Base => "base".into(),
                    PlanVariant::MomentumConstantApproximate => "momentum (constant-approximate)".into(),
                },
            ),
            ("mu", format!("{:.17e}", self.mu)),
            ("bar_delta0", format!("{:.17e}", self.bar_delta0)),
            ("s_mu", format!("{:.17e}", self.s_mu)),
            ("c_p", format!("{:.17e}", self.c_p)),
            ("lambda", format!("{:.17e}", self.lambda)),
            ("lambda0", opt(self.lambda0)),
            ("alpha", format!("{:.17e}", self.alpha)),
            ("T", self.t.to_string()),
            ("tau", format!("{:.17e}", self.tau)),
            ("tau0", opt(self.tau0)),
            ("M", self.m_required.to_string()),
            ("M0", opt_u(self.m0_required)),
            ("beta", opt(self.beta)),
            ("one_minus_beta", opt(self.one_minus_beta)),
            ("eta0", format!("{:.17e}", self.eta0)),
            ("eta", format!("{:.17e}", self.eta)),
            ("eta0_warm", opt(self.eta0_warm)),
            ("predicted_queries", self.predicted_queries.to_string()),
            ("trivial_regime", self.trivial_regime.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_p_examples() {
        assert_eq!(c_p(2.0), 124.0);
        assert!((c_p(1.5) - (120.0 + 2f64.powf(2.5) / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn momentum_alpha_at_half() {
        let inputs = PlannerInputs::new(1.0, 0.5, 1.0, 2.0, 10, 0.5, 0.1)
            .with_beta(0.5)
            .with_ceiling(1 << 100);
        let plan = plan_momentum(&inputs).unwrap();
        assert!((plan.alpha - 1.0 / (32.0 * 3f64.sqrt())).abs() < 1e-15);
        assert!((plan.alpha - 0.0180422).abs() < 1e-7);
    }

    #[test]
    fn unit_ratio_gives_eight_s() {
        // (M/λ)^(1/p) = 1 -> τ = 8 S_μ; with a huge ε the minimal M is ⌈λ⌉
        let inputs = PlannerInputs::new(1.0, 1.0, 0.0, 2.0, 1, 1e3, 1.0).with_mu(1e-9);
        let plan = plan_base(&inputs).unwrap();
        assert_eq!(plan.m_required, plan.lambda.ceil() as u128);
        let ratio = plan.m_required as f64 / plan.lambda;
        assert!((plan.tau - 8.0 * plan.s_mu * ratio.powf(0.5)).abs() < 1e-12);
        assert!(plan.trivial_regime);
        for p in [1.2, 1.5, 2.0] {
            assert_eq!(clip_threshold(0.7, 1.0, p), 8.0 * 0.7);
        }
    }

    #[test]
    fn momentum_rejects_small_beta() {
        let inputs = PlannerInputs::new(1.0, 0.5, 1.0, 1.5, 10, 0.1, 0.1).with_beta(0.3);
        assert!(matches!(plan_momentum(&inputs), Err(PlannerError::Invalid(_))));
        let inputs = PlannerInputs::new(1.0, 0.5, 1.0, 1.5, 10, 0.1, 0.1).with_beta(0.9).with_mu(1.0);
        assert!(matches!(plan_momentum(&inputs), Err(PlannerError::Invalid(_))));
    }

    #[test]
    fn infeasible_reports_limiting_eta() {
        let inputs = PlannerInputs::new(1.0, 0.5, 1.0, 1.5, 100, 0.1, 0.05);
        match plan_base(&inputs) {
            Err(PlannerError::Infeasible { limiting_eta, target, .. }) => assert!(limiting_eta > target),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn search_returns_minimal_batch() {
        for &p in &[1.2, 1.5, 2.0] {
            let inputs = PlannerInputs::new(1.0, 2.0, 1.0, p, 10, 5.0, 0.1).with_ceiling(1 << 100);
            let plan = plan_base(&inputs).unwrap();
            let ch = Chain::new(&inputs);
            let ok = |m: u128| ch.feasible(&inputs, m, plan.lambda);
            assert!(ok(plan.m_required));
            let lo = plan.lambda.ceil() as u128;
            if plan.m_required > lo {
                assert!(!ok(plan.m_required - 1), "p = {p}");
            }
        }
    }

    #[test]
    fn turning_ratio() {
        assert_eq!(eta0_turning_ratio(2.0), 1.0);
        assert!((eta0_turning_ratio(1.5) - 0.5f64.exp()).abs() < 1e-15);
        assert!((eta0_turning_ratio(4.0 / 3.0) - 1f64.exp()).abs() < 1e-12);
        for p in [1.2, 1.5, 1.8] {
            let r = eta0_turning_ratio(p);
            let f = |s: f64| eta0_at_ratio(1.0, 1, 1.0, p, s);
            assert!(f(r * 0.9) < f(r) && f(r * 1.1) < f(r), "p = {p}");
        }
    }

    #[test]
    fn exponents() {
        assert_eq!(complexity_exponents(2.0), (4.0, 1.0));
        assert_eq!(complexity_exponents(1.5), (5.0, 1.5));
        let inputs = PlannerInputs::new(1.0, 1.0, 1.0, 1.04, 1, 1e4, 1.0).with_mu(1e-6);
        let plan = plan_base(&inputs).unwrap();
        let report = predicted_complexity(&plan, &inputs);
        assert!(report.near_singular);
        let inputs = PlannerInputs::new(1.0, 1.0, 1.0, 2.0, 1, 1e3, 1.0).with_mu(1e-6);
        let report = predicted_complexity(&plan_base(&inputs).unwrap(), &inputs);
        assert!(report.to_string().contains("eps^-4 d^1"));
    }

    #[test]
    fn small_batch_solves_for_beta() {
        let inputs = PlannerInputs::new(1.0, 0.5, 1.0, 2.0, 4, 0.5, 0.1).with_ceiling(1 << 100);
        let plan = plan_momentum_small_batch(&inputs, 1).unwrap();
        assert_eq!(plan.m_required, 1);
        let omb = plan.one_minus_beta.unwrap();
        assert!(omb > 0.0 && omb <= 0.5);
        // a slightly larger 1 - β no longer fits M = 1
        let wider = plan_momentum_with(&inputs, omb * 1.01).unwrap();
        assert!(wider.m_required > 1);
    }
}
