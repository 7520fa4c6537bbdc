//! The heavy-tailed quadratic `F(x; zeta) = ½‖x‖² + ⟨zeta, x⟩`.

use serde::{Deserialize, Serialize};

use super::noise::{sample_sparse_noise, sample_weak_l2, NoiseModel};
use super::{GradientReference, Oracle, OracleError, SampleKey};
use crate::rng::StreamKey;
use crate::vecops;

/// `f(x) = ½‖x‖²` observed through heavy-tailed linear noise. `L = 1`,
/// `f_* = 0`, `grad f(x) = x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    pub dim: usize,
    pub noise: NoiseModel,
    pub x0: Vec<f64>,
}

impl QuadraticProblem {
    /// Problem with `x0 = x0_norm * e_1`.
    pub fn new(dim: usize, noise: NoiseModel, x0_norm: f64) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let mut x0 = vec![0.0; dim];
        x0[0] = x0_norm;
        Self { dim, noise, x0 }
    }

    pub fn with_x0(noise: NoiseModel, x0: Vec<f64>) -> Self {
        assert!(!x0.is_empty(), "dimension must be positive");
        Self {
            dim: x0.len(),
            noise,
            x0,
        }
    }

    /// `Δ0 = f(x0) − f_* = ½‖x0‖²`.
    pub fn initial_gap(&self) -> f64 {
        0.5 * vecops::norm_sq(&self.x0)
    }

    /// Noise-only part `⟨zeta(key), x⟩`.
    pub fn noise_term(&self, x: &[f64], key: SampleKey) -> f64 {
        let stream = StreamKey::from_raw(key.0);
        match self.noise {
            NoiseModel::None => 0.0,
            NoiseModel::SparsePareto { p, scale } => {
                let z = sample_sparse_noise(self.dim, p, scale, stream);
                z.value * x[z.coord]
            }
            NoiseModel::WeakL2 => sample_weak_l2(stream) * x[0],
        }
    }

    /// Dense noise vector `zeta(key)`.
    pub fn noise_vector(&self, key: SampleKey) -> Vec<f64> {
        let stream = StreamKey::from_raw(key.0);
        match self.noise {
            NoiseModel::None => vec![0.0; self.dim],
            NoiseModel::SparsePareto { p, scale } => sample_sparse_noise(self.dim, p, scale, stream).to_dense(self.dim),
            NoiseModel::WeakL2 => {
                let mut v = vec![0.0; self.dim];
                v[0] = sample_weak_l2(stream);
                v
            }
        }
    }
}

impl Oracle for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError> {
        if x.len() != self.dim {
            return Err(OracleError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(0.5 * vecops::norm_sq(x) + self.noise_term(x, key))
    }
}

impl GradientReference for QuadraticProblem {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * vecops::norm_sq(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn min_value(&self) -> f64 {
        0.0
    }

    fn smoothness(&self) -> f64 {
        1.0
    }
}
