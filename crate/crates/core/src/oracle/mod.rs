//! Objective oracles.
//!
//! An [`Oracle`] answers `F(x; xi)` where the noise sample `xi` is named by a
//! [`SampleKey`]. Calling it twice with the same key and different points
//! must reuse the same noise realization; the two-point estimator relies on
//! this.

mod external;
pub mod noise;
mod quadratic;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

pub use external::{ExternalOracle, ExternalOracleSpec, PROTOCOL_VERSION};
pub use noise::NoiseModel;
pub use quadratic::QuadraticProblem;

/// Identifier of one noise sample `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SampleKey(pub u64);

impl std::fmt::Display for SampleKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("point has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("external oracle timed out after {after:?} (sample {key})")]
    Timeout { key: SampleKey, after: Duration },
    #[error("external oracle sent a malformed reply {reply:?} (sample {key})")]
    Malformed { key: SampleKey, reply: String },
    #[error("oracle returned non-finite value {value} (sample {key})")]
    NonFinite { key: SampleKey, value: f64 },
    #[error("external oracle process exited (sample {key})")]
    Exited { key: SampleKey },
    #[error("unsupported external-oracle protocol version {0}")]
    UnsupportedProtocol(u32),
    #[error("invalid oracle specification: {0}")]
    InvalidSpec(String),
    #[error("external oracle I/O failure: {0}")]
    Io(String),
}

/// Stochastic zeroth-order oracle `F(x; xi)`.
pub trait Oracle: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError>;
}

/// Noiseless reference quantities of a problem. Only diagnostics use these;
/// optimizers never see them.
pub trait GradientReference: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// `f_* = inf f`.
    fn min_value(&self) -> f64;
    /// Smoothness constant `L`.
    fn smoothness(&self) -> f64;
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError> {
        (**self).evaluate(x, key)
    }
}

impl<O: Oracle + ?Sized> Oracle for std::sync::Arc<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError> {
        (**self).evaluate(x, key)
    }
}

/// Wrapper counting every evaluation forwarded to the inner oracle.
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicU64,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Oracle> Oracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x, key)
    }
}
