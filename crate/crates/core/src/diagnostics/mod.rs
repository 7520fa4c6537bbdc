//! Estimator-quality diagnostics and empirical checks of the analysis'
//! inequalities.

mod lemmas;
mod metrics;
mod probe;

pub use lemmas::{
    check_clipped_second_moment, check_clipped_second_moment_samples, check_clipping_bias,
    check_clipping_bias_samples, check_smoothing_bias, check_weak_tail, clipped_second_moment_bound,
    clipping_bias_bound, default_suite_cases, lemma_suite, localized_scale, localized_tail_bound,
    verify_localized_tail, DirectionalSampler, LemmaCheckReport, LemmaError, ScalarSampler, SuiteCase,
    GRADIENT_SE_SLACK, SE_SLACK,
};
pub use metrics::{
    aggregate_finals, aggregate_metrics, cosine_alignment, lower_median, median, outlier_ratio, quantile, Histogram,
    MethodSummary, COSINE_BINS, OUTLIER_BINS, OUTLIER_RANGE,
};
pub use probe::{direction_probe, ProbeResult, ProbeSettings};

/// Per-batch diagnostics of one gradient estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchDiagnostics {
    /// `None` when the estimate or the true gradient is zero.
    pub cosine: Option<f64>,
    pub outlier_log_ratio: Option<f64>,
    pub clipped_fraction: f64,
}

impl BatchDiagnostics {
    pub fn of(estimate: &crate::estimator::GradientEstimate, grad_true: &[f64]) -> Self {
        Self {
            cosine: cosine_alignment(&estimate.g, grad_true),
            outlier_log_ratio: outlier_ratio(&estimate.raw_scalars),
            clipped_fraction: estimate.clipped_fraction(),
        }
    }
}
