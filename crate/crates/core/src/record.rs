//! Per-iteration run records shared by the optimizer, diagnostics and
//! harness.

use serde::{Deserialize, Serialize};

use crate::estimator::EstimatorKind;

/// Method compared by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Raw,
    VectorClip,
    ScalarClip,
    ScalarClipMomentum,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Raw,
        Method::VectorClip,
        Method::ScalarClip,
        Method::ScalarClipMomentum,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::VectorClip => "vector_clip",
            Method::ScalarClip => "scalar_clip",
            Method::ScalarClipMomentum => "scalar_clip_momentum",
        }
    }

    pub fn estimator(&self) -> EstimatorKind {
        match self {
            Method::Raw => EstimatorKind::Raw,
            Method::VectorClip => EstimatorKind::VectorClip,
            Method::ScalarClip | Method::ScalarClipMomentum => EstimatorKind::ScalarClip,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// One row of `records.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub t: u64,
    pub grad_norm: f64,
    pub cosine: Option<f64>,
    pub outlier_log_ratio: Option<f64>,
    pub clipped_fraction: f64,
    pub queries: u64,
}
