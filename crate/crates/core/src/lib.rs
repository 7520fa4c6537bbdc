//! Robust scalar-clipped zeroth-order optimization under heavy-tailed noise.

pub mod diagnostics;
pub mod estimator;
pub mod harness;
pub mod optimizer;
pub mod oracle;
pub mod planner;
pub mod record;
pub mod rng;
pub mod vecops;
