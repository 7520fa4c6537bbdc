use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rsczo::diagnostics::lemma_suite;
use rsczo::harness::{
    emit_checks, emit_records, emit_summary, emit_text, evaluate, momentum_text, planner_inputs, run_momentum_smallbatch,
    run_representative, sweep_dimension, sweep_tail, tune, tune_text, write_sweep, Cell, CellOutcome, ExperimentConfig,
    OutputFormat, SeedAudit, Selection,
};
use rsczo::planner::{plan_base, plan_momentum, plan_momentum_small_batch};
use rsczo::record::Method;

#[derive(Parser, Debug)]
#[command(name = "rsczo", about = "Scalar-clipped zeroth-order optimization experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlanKind {
    Base,
    Momentum,
    /// Momentum with a batch of one.
    MomentumM1,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one hyperparameter cell on the evaluation seeds.
    Run {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        alpha: f64,
        /// `tau` (scalar clipping) or `r_vec` (vector clipping).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Grid search on the validation seeds.
    Tune,
    /// Representative run: tune, evaluate, probe, plot data.
    Rep,
    SweepDim,
    SweepTail,
    /// Momentum with M = 1 using planner parameters, plus a base contrast.
    MomentumM1,
    /// Theory-prescribed parameters for the configured problem.
    Plan {
        #[arg(long, value_enum, default_value = "base")]
        kind: PlanKind,
        #[arg(long)]
        beta: Option<f64>,
        /// Largest batch size the planner may return (default 2^40).
        #[arg(long)]
        max_batch: Option<u128>,
    },
    /// Empirical checks of the lemma inequalities and tail assumption.
    Check {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(outcome: &CellOutcome) {
    for r in outcome.summary_rows() {
        println!(
            "{:<22} {:<22} median {:.4e}  success {:.2}  cosine {}",
            r.cell_id,
            r.method.to_string(),
            r.median_final,
            r.success_rate,
            r.median_cosine.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into())
        );
    }
}

fn report_selections(outcome: &rsczo::harness::TuneOutcome) {
    for (m, s) in &outcome.selections {
        match s {
            Selection::Tuned { cell, median_final } => println!(
                "{m}: alpha={} threshold={} (validation median {median_final:.4e})",
                cell.alpha,
                cell.threshold.map(|t| format!("{t:.6e}")).unwrap_or_else(|| "-".into())
            ),
            Selection::Untunable => println!("{m}: untunable (every cell diverged)"),
        }
    }
}

fn written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker pool")?;
    }
    let cfg = load_config(&cli.common)?;
    let out: &Path = &cfg.output_dir;
    let format = cli.common.format;
    let audit = SeedAudit::default();

    match cli.command {
        Command::Run {
            method,
            alpha,
            threshold,
        } => {
            if method != Method::Raw && threshold.is_none() {
                bail!("--threshold is required for {method}");
            }
            let cell = Cell {
                method,
                alpha,
                threshold,
            };
            let eval = evaluate(&cfg, &[cell], &audit)?;
            std::fs::create_dir_all(out)?;
            let outcome = CellOutcome {
                cell_id: rsczo::harness::cell_id(&cfg),
                config: cfg.clone(),
                tune: rsczo::harness::TuneOutcome {
                    scores: vec![],
                    selections: Default::default(),
                },
                evaluation: eval,
            };
            print_summary(&outcome);
            written(&[
                emit_records(&outcome.evaluation.records, out, format)?,
                emit_summary(&outcome.summary_rows(), out, format)?,
            ]);
        }
        Command::Tune => {
            let t = tune(&cfg, &audit)?;
            report_selections(&t);
            std::fs::create_dir_all(out)?;
            let path = out.join("tune.csv");
            emit_text(&path, &tune_text(&t))?;
            written(&[path]);
        }
        Command::Rep => {
            let rep = run_representative(&cfg, out, format, &audit, None)?;
            report_selections(&rep.outcome.tune);
            print_summary(&rep.outcome);
            if let Some(p) = &rep.probe {
                let (r, v, s) = p.medians();
                println!(
                    "matched-batch probe median cosine: raw {:.3}  vector {:.3}  scalar {:.3}",
                    r.unwrap_or(f64::NAN),
                    v.unwrap_or(f64::NAN),
                    s.unwrap_or(f64::NAN)
                );
            }
            written(&rep.files);
        }
        Command::SweepDim => {
            let outcomes = sweep_dimension(&cfg, &audit, None)?;
            outcomes.iter().for_each(|o| print_summary(o));
            written(&write_sweep(&outcomes, &out.join("sweep_dim"), format)?);
        }
        Command::SweepTail => {
            let outcomes = sweep_tail(&cfg, &audit, None)?;
            outcomes.iter().for_each(|o| print_summary(o));
            written(&write_sweep(&outcomes, &out.join("sweep_tail"), format)?);
        }
        Command::MomentumM1 => {
            let report = run_momentum_smallbatch(&cfg, &audit)?;
            let text = momentum_text(&report);
            print!("{text}");
            let dir = out.join("momentum_m1");
            std::fs::create_dir_all(&dir)?;
            let (txt, json) = (dir.join("report.txt"), dir.join("report.json"));
            emit_text(&txt, &text)?;
            emit_text(&json, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            written(&[txt, json]);
        }
        Command::Plan { kind, beta, max_batch } => {
            let mut inputs = planner_inputs(&cfg);
            if let Some(c) = max_batch {
                inputs = inputs.with_ceiling(c);
            }
            let plan = match kind {
                PlanKind::Base => plan_base(&inputs),
                PlanKind::Momentum => plan_momentum(&inputs.with_beta(beta.unwrap_or(cfg.momentum_beta))),
                PlanKind::MomentumM1 => plan_momentum_small_batch(&inputs, 1),
            }?;
            print!("{}", plan.to_text());
            println!("{}", serde_json::to_string(&plan)?);
        }
        Command::Check { samples } => {
            let reports = lemma_suite(samples, cfg.master_seed)?;
            for r in &reports {
                println!(
                    "{} {:<48} lhs {:.4e}  bound {:.4e}",
                    if r.passed { "pass" } else { "FAIL" },
                    r.lemma_id,
                    r.empirical_lhs,
                    r.bound_rhs
                );
            }
            std::fs::create_dir_all(out)?;
            written(&[emit_checks(&reports, out, format)?]);
            if reports.iter().any(|r| !r.passed) {
                bail!("some checks failed");
            }
        }
    }
    Ok(())
}
