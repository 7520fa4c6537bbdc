//! Reference external oracle for the line protocol: answers
//! `EVAL <key> <x_1> ... <x_d>` with the sample objective of the quadratic
//! problem. The failure modes exist to exercise error handling.

use std::io::{BufRead, Write};

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use rsczo::oracle::{NoiseModel, Oracle, QuadraticProblem, SampleKey};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Ok,
    /// Reply `NaN` to every request.
    Nan,
    /// Read requests but never reply.
    Silent,
    /// Reply with a non-numeric line.
    Garbage,
    /// Exit after reading the first request.
    Exit,
}

#[derive(Parser, Debug)]
#[command(about = "Line-protocol quadratic oracle")]
struct Args {
    #[arg(long, value_enum, default_value = "ok")]
    mode: Mode,
    /// Add sparse Pareto noise with this tail exponent.
    #[arg(long)]
    pareto_p: Option<f64>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let noise = match args.pareto_p {
        Some(p) => NoiseModel::sparse_pareto(p)?,
        None => NoiseModel::None,
    };
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("EVAL") {
            bail!("unexpected request {line:?}");
        }
        let key: u64 = parts.next().context("missing key")?.parse()?;
        let x: Vec<f64> = parts.map(str::parse).collect::<Result<_, _>>()?;
        match args.mode {
            Mode::Ok => {
                let problem = QuadraticProblem::with_x0(noise, vec![0.0; x.len()]);
                writeln!(out, "{:.17e}", problem.evaluate(&x, SampleKey(key))?)?;
            }
            Mode::Nan => writeln!(out, "NaN")?,
            Mode::Silent => continue,
            Mode::Garbage => writeln!(out, "not a number")?,
            Mode::Exit => return Ok(()),
        }
        out.flush()?;
    }
    Ok(())
}
