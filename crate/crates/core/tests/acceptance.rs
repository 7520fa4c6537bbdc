//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion even when an earlier one fails and exits non-zero if
//! any failed. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 5 8`.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rsczo::diagnostics::{lemma_suite, ProbeResult};
use rsczo::estimator::{estimate_gradient, vector_clip, Aggregation};
use rsczo::harness::{
    probe_for, run_momentum_smallbatch, sweep_dimension, sweep_tail, tune_and_evaluate, CellOutcome,
    ExperimentCache, ExperimentConfig, SeedAudit, SeedPhase,
};
use rsczo::optimizer::{run, BaseConfig, MomentumConfig, OptimizerConfig, RunOptions};
use rsczo::oracle::{CountingOracle, NoiseModel, QuadraticProblem};
use rsczo::planner::{c_p, plan_base, plan_momentum, PlannerInputs};
use rsczo::record::Method;
use rsczo::rng::StreamKey;
use rsczo::vecops::{dot, norm};
use serde_json::Value;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

/// Shared representative-setting results, computed on first use.
#[derive(Default)]
struct Ctx {
    cache: ExperimentCache,
    audit: SeedAudit,
    rep: Option<Arc<CellOutcome>>,
    probe: Option<ProbeResult>,
}

impl Ctx {
    fn rep(&mut self) -> Result<Arc<CellOutcome>> {
        if self.rep.is_none() {
            let cfg = ExperimentConfig::default();
            let outcome = tune_and_evaluate(&cfg, &self.audit, Some(&self.cache))?;
            self.probe = probe_for(&cfg, &outcome.tune)?;
            self.rep = Some(outcome);
        }
        Ok(self.rep.clone().unwrap())
    }
}

fn medians(o: &CellOutcome) -> (f64, f64, f64) {
    let m = |k| o.median_final(k).unwrap_or(f64::NAN);
    (m(Method::Raw), m(Method::VectorClip), m(Method::ScalarClip))
}

fn within_factor_two(got: f64, want: f64) -> bool {
    got >= want / 2.0 && got <= want * 2.0
}

fn c1_unbiasedness(_: &mut Ctx) -> Result<Verdict> {
    let d = 10;
    let problem = QuadraticProblem::new(d, NoiseModel::None, 1.0);
    let n = 100_000;
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    let root = StreamKey::root(1);
    for i in 0..n {
        let g = estimate_gradient(&problem, &problem.x0, 1e-3, 1, Aggregation::Raw, root.index(i))?.g;
        for k in 0..d {
            sum[k] += g[k];
            sum_sq[k] += g[k] * g[k];
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..d {
        let mean = sum[k] / n as f64;
        let se = ((sum_sq[k] / n as f64 - mean * mean) / n as f64).sqrt();
        worst = worst.max((mean - problem.x0[k]).abs() / se);
    }
    verdict(worst <= 5.0, format!("largest deviation {worst:.2} standard errors (limit 5)"))
}

fn c2_lemma_suite(_: &mut Ctx) -> Result<Verdict> {
    let reports = lemma_suite(1_000_000, 0)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.lemma_id.as_str()).collect();
    verdict(
        failed.is_empty(),
        format!("{}/{} checks passed {failed:?}", reports.len() - failed.len(), reports.len()),
    )
}

fn c3_representative(ctx: &mut Ctx) -> Result<Verdict> {
    let rep = ctx.rep()?;
    let s = &rep.evaluation.summaries;
    let rate = |m| s.get(&m).map(|x| x.success_rate).unwrap_or(f64::NAN);
    let (raw, vec, sca) = medians(&rep);
    let pass = rate(Method::ScalarClip) == 1.0
        && rate(Method::Raw) == 0.0
        && rate(Method::VectorClip) <= 0.1
        && within_factor_two(raw, 0.662)
        && within_factor_two(vec, 0.142)
        && within_factor_two(sca, 0.065);
    verdict(
        pass,
        format!(
            "median final raw {raw:.4} / vector {vec:.4} / scalar {sca:.4}; success {:.2} / {:.2} / {:.2}",
            rate(Method::Raw),
            rate(Method::VectorClip),
            rate(Method::ScalarClip)
        ),
    )
}

fn c4_cosine(ctx: &mut Ctx) -> Result<Verdict> {
    let rep = ctx.rep()?;
    let probe = ctx.probe.as_ref().ok_or_else(|| anyhow::anyhow!("no probe (a method was untunable)"))?;
    let (r, v, s) = probe.medians();
    let (r, v, s) = (r.unwrap_or(f64::NAN), v.unwrap_or(f64::NAN), s.unwrap_or(f64::NAN));
    let traj = |m| {
        rep.evaluation
            .summaries
            .get(&m)
            .and_then(|x| x.median_cosine)
            .unwrap_or(f64::NAN)
    };
    verdict(
        s - v >= 0.15 && (v - r).abs() <= 0.03,
        format!(
            "matched-batch median cosine raw {r:.3} / vector {v:.3} / scalar {s:.3}; \
             along trajectories {:.3} / {:.3} / {:.3}",
            traj(Method::Raw),
            traj(Method::VectorClip),
            traj(Method::ScalarClip)
        ),
    )
}

fn c5_direction(_: &mut Ctx) -> Result<Verdict> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..200);
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1e3..1e3)).collect();
        let r = norm(&g) * rng.random_range(1e-6..0.999);
        let c = vector_clip(&g, r)?;
        // unclamped cosine
        worst = worst.max((dot(&c, &g) / (norm(&c) * norm(&g)) - 1.0).abs());
    }
    verdict(worst <= 1e-12, format!("max |cos - 1| = {worst:.2e} over 10^4 cases"))
}

fn ordered(o: &CellOutcome) -> bool {
    let (raw, vec, sca) = medians(o);
    sca < vec && vec < raw
}

fn c6_dimension(ctx: &mut Ctx) -> Result<Verdict> {
    ctx.rep()?;
    let outcomes = sweep_dimension(&ExperimentConfig::default(), &ctx.audit, Some(&ctx.cache))?;
    let reference: BTreeMap<usize, f64> = [(25, 0.036), (50, 0.047), (100, 0.065), (200, 0.090)].into();
    let mut pass = true;
    let mut parts = vec![];
    for o in &outcomes {
        let (raw, vec, sca) = medians(o);
        pass &= ordered(o) && within_factor_two(sca, reference[&o.config.d]);
        parts.push(format!("d={}: {raw:.3}/{vec:.3}/{sca:.3}", o.config.d));
    }
    verdict(pass, format!("raw/vector/scalar medians {}", parts.join(", ")))
}

fn c7_tail(ctx: &mut Ctx) -> Result<Verdict> {
    ctx.rep()?;
    let outcomes = sweep_tail(&ExperimentConfig::default(), &ctx.audit, Some(&ctx.cache))?;
    let mut pass = outcomes.iter().all(|o| ordered(o));
    let ratios: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            let (raw, _, sca) = medians(o);
            raw / sca
        })
        .collect();
    pass &= ratios.windows(2).all(|w| w[1] < w[0]);
    let parts: Vec<String> = outcomes
        .iter()
        .zip(&ratios)
        .map(|(o, r)| {
            let (raw, vec, sca) = medians(o);
            format!("p={}: {raw:.3}/{vec:.3}/{sca:.3} ratio {r:.1}", o.config.p)
        })
        .collect();
    verdict(pass, parts.join(", "))
}

fn c8_planner(_: &mut Ctx) -> Result<Verdict> {
    let golden: Value = serde_json::from_str(include_str!("data/planner_golden.json"))?;
    let f = |v: &Value, k: &str| v[k].as_f64().unwrap();
    let int = |v: &Value, k: &str| v[k].as_str().unwrap().parse::<u128>().unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let mut worst: f64 = 0.0;
    let mut t_mismatch = 0;
    let cases = golden["random_cases"].as_array().unwrap();
    for case in cases {
        let i = &case["inputs"];
        let inputs = PlannerInputs::new(
            f(i, "L"),
            f(i, "D0"),
            f(i, "sigma"),
            f(i, "p"),
            i["d"].as_u64().unwrap() as usize,
            f(i, "eps"),
            f(i, "delta"),
        )
        .with_ceiling(1 << 100);
        let b = plan_base(&inputs)?;
        let m = plan_momentum(&inputs.with_beta(f(i, "beta")))?;
        let (wb, wm) = (&case["base"], &case["momentum"]);
        t_mismatch += usize::from(b.t != int(wb, "T")) + usize::from(m.t != int(wm, "T"));
        for (got, want) in [
            (b.alpha, f(wb, "alpha")),
            (b.tau, f(wb, "tau")),
            (b.lambda, f(wb, "lam")),
            (b.c_p, f(wb, "Cp")),
            (b.eta0, f(wb, "eta0")),
            (m.alpha, f(wm, "alpha")),
            (m.lambda, f(wm, "lam")),
            (m.lambda0.unwrap(), f(wm, "lam0")),
            (m.tau, f(wm, "tau")),
            (m.tau0.unwrap(), f(wm, "tau0")),
        ] {
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    let half = plan_momentum(&PlannerInputs::new(1.0, 1.0, 1.0, 1.5, 10, 0.1, 0.05).with_beta(0.5).with_ceiling(1 << 100))?;
    let alpha_ok = close(half.alpha, 1.0 / (32.0 * 3f64.sqrt()));
    let pass = worst <= 1e-12 && t_mismatch == 0 && c_p(2.0) == 124.0 && alpha_ok;
    verdict(
        pass,
        format!(
            "{} cases, max relative error {worst:.1e}, T mismatches {t_mismatch}, C_p(2) = {}, alpha_mom(1/2) ok = {alpha_ok}",
            cases.len(),
            c_p(2.0)
        ),
    )
}

fn c9_momentum(_: &mut Ctx) -> Result<Verdict> {
    let cfg = ExperimentConfig::default();
    let r = run_momentum_smallbatch(&cfg, &SeedAudit::default())?;
    let contrast = format!("base M=1 contrast {}/{} seeds", r.contrast.results.successes, cfg.evaluation_seeds);
    let Some(m) = &r.momentum else {
        return verdict(
            false,
            format!("momentum run not executable: {}; {contrast}", r.notes.join("; ")),
        );
    };
    let pass = m.results.successes >= 18 && r.contrast.results.successes <= 5;
    verdict(
        pass,
        format!(
            "momentum {}/{} seeds (T={}, capped {}), {contrast}",
            m.results.successes, cfg.evaluation_seeds, m.iterations, m.capped
        ),
    )
}

fn c10_queries(_: &mut Ctx) -> Result<Verdict> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(10);
    let mut mismatches = vec![];
    for i in 0..10 {
        let base = BaseConfig {
            alpha: 0.05,
            mu: 1e-3,
            batch_size: rng.random_range(1..64),
            aggregation: Aggregation::ScalarClip { tau: 1.0 },
            iterations: rng.random_range(1..50),
        };
        let (config, want) = if i % 2 == 0 {
            let q = 2 * base.batch_size as u64 * base.iterations;
            (OptimizerConfig::Base(base), q)
        } else {
            let m0 = rng.random_range(1..256);
            let q = 2 * m0 as u64 + 2 * base.batch_size as u64 * (base.iterations - 1);
            let config = OptimizerConfig::Momentum(MomentumConfig {
                base,
                beta: 0.9,
                warm_batch_size: m0,
                warm_aggregation: Aggregation::ScalarClip { tau: 4.0 },
            });
            (config, q)
        };
        let oracle = CountingOracle::new(QuadraticProblem::new(8, NoiseModel::sparse_pareto(1.5)?, 3.0));
        let x0 = oracle.inner().x0.clone();
        run(&oracle, &config, &x0, i, RunOptions::default())?;
        if oracle.count() != want {
            mismatches.push((i, oracle.count(), want));
        }
    }
    verdict(mismatches.is_empty(), format!("10 configs, mismatches {mismatches:?}"))
}

const SMALL_CONFIG: &str = "\
d = 20
iter_budget = 200
validation_seeds = 2
evaluation_seeds = 3
stepsize_grid = 0.05, 0.1
tau_grid = 0.125, 0.25
rvec_grid = 1, 2
probe_points = 20
";

fn c11_determinism(_: &mut Ctx) -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("small.cfg");
    std::fs::write(&config, SMALL_CONFIG)?;
    let mut outputs = vec![];
    for (name, jobs) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_rsczo"))
            .args(["rep", "--seed", "42", "--jobs", jobs, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()?;
        ensure!(status.status.success(), "rep failed: {}", String::from_utf8_lossy(&status.stderr));
        outputs.push(out);
    }
    let mut same = true;
    let mut sizes = vec![];
    for file in ["records.csv", "summary.csv"] {
        let a = std::fs::read(outputs[0].join(file))?;
        let b = std::fs::read(outputs[1].join(file))?;
        same &= a == b && !a.is_empty();
        sizes.push(format!("{file} {} bytes", a.len()));
    }
    verdict(same, format!("two runs (1 and 3 workers) byte-identical: {same}; {}", sizes.join(", ")))
}

type Criterion = fn(&mut Ctx) -> Result<Verdict>;

fn main() {
    let criteria: [(u32, &str, Criterion); 11] = [
        (1, "estimator unbiasedness", c1_unbiasedness),
        (2, "lemma suite", c2_lemma_suite),
        (5, "direction preservation", c5_direction),
        (8, "planner arithmetic", c8_planner),
        (10, "query accounting", c10_queries),
        (11, "determinism", c11_determinism),
        (3, "representative reproduction", c3_representative),
        (4, "cosine mechanism", c4_cosine),
        (6, "dimension sweep", c6_dimension),
        (7, "tail sweep", c7_tail),
        (9, "momentum small batch", c9_momentum),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut ctx = Ctx::default();
    let mut results = BTreeMap::new();
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = match catch_unwind(AssertUnwindSafe(|| check(&mut ctx))) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict {
                pass: false,
                detail: format!("error: {e:#}"),
            },
            Err(_) => Verdict {
                pass: false,
                detail: "panicked".into(),
            },
        };
        let line = format!(
            "criterion {id:>2} {:<4} {name} ({:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        let _ = writeln!(std::io::stdout(), "{line}");
        results.insert(id, (v.pass, line));
    }
    if ctx.rep.is_some() {
        let tuning = ctx.audit.seeds(SeedPhase::Validation);
        let eval = ctx.audit.seeds(SeedPhase::Evaluation);
        let disjoint = tuning.iter().all(|s| !eval.contains(s));
        let _ = writeln!(
            std::io::stdout(),
            "seed audit: tuning seeds {tuning:?}, evaluation seeds {eval:?}, disjoint = {disjoint}"
        );
    }
    let _ = writeln!(std::io::stdout(), "\nacceptance summary");
    for (_, line) in results.values() {
        let _ = writeln!(std::io::stdout(), "{line}");
    }
    let failed = results.values().filter(|(p, _)| !p).count();
    let _ = writeln!(std::io::stdout(), "{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
