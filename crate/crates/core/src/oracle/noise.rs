//! Heavy-tailed noise models.
//!
//! * `SparsePareto`: `zeta = s * c * A * e_J` with a random sign `s`, a
//!   uniform coordinate `J` and a Pareto amplitude `A` (`P(A > t) = t^-p`,
//!   `t >= 1`). Its norm has the exact weak-`L_p` tail `(c/t)^p` for `t >= c`.
//! * `WeakL2`: a symmetric scalar `Z` with `P(|Z| > t) = t^-2` for `t >= 1`,
//!   entering the objective through the first coordinate. `E[Z^2]` is
//!   infinite although the tail is weak-`L_2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    SparsePareto { p: f64, scale: f64 },
    #[serde(rename = "weak_l2")]
    WeakL2,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseModelError {
    #[error("Pareto tail exponent must exceed 1 (finite mean), got {0}")]
    TailExponent(f64),
    #[error("noise scale must be positive and finite, got {0}")]
    Scale(f64),
    #[error("unknown noise family {0:?}")]
    UnknownFamily(String),
}

impl NoiseModel {
    pub fn sparse_pareto(p: f64) -> Result<Self, NoiseModelError> {
        Self::sparse_pareto_scaled(p, 1.0)
    }

    pub fn sparse_pareto_scaled(p: f64, scale: f64) -> Result<Self, NoiseModelError> {
        let model = NoiseModel::SparsePareto { p, scale };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), NoiseModelError> {
        if let NoiseModel::SparsePareto { p, scale } = *self {
            if !(p > 1.0 && p.is_finite()) {
                return Err(NoiseModelError::TailExponent(p));
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(NoiseModelError::Scale(scale));
            }
        }
        Ok(())
    }

    /// Family tag as used in configuration files.
    pub fn family(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::SparsePareto { .. } => "sparse_pareto",
            NoiseModel::WeakL2 => "weak_l2",
        }
    }

    /// Weak-`L_p` scale `sigma` with `P(||noise|| > t) <= (sigma/t)^p`.
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::SparsePareto { scale, .. } => scale,
            NoiseModel::WeakL2 => 1.0,
        }
    }

    /// Tail exponent `p`; `None` for the noiseless model.
    pub fn tail_exponent(&self) -> Option<f64> {
        match *self {
            NoiseModel::None => None,
            NoiseModel::SparsePareto { p, .. } => Some(p),
            NoiseModel::WeakL2 => Some(2.0),
        }
    }

    /// Euclidean norm of the gradient noise `grad F(x; xi) - grad f(x)` for
    /// the sample named by `key`. Independent of `x` for both families.
    pub fn noise_norm(&self, dim: usize, key: StreamKey) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::SparsePareto { p, scale } => sample_sparse_noise(dim, p, scale, key).value.abs(),
            NoiseModel::WeakL2 => sample_weak_l2(key).abs(),
        }
    }
}

/// Inverse-CDF Pareto map `u -> u^(-1/p)` for `u` in `(0, 1]`.
#[inline]
pub fn pareto_from_uniform(u: f64, p: f64) -> f64 {
    u.powf(-1.0 / p)
}

/// Uniform draw on `(0, 1]`.
#[inline]
fn open_closed_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Pareto amplitude with `P(A > t) = t^-p` for `t >= 1`.
pub fn pareto_amplitude(p: f64, key: StreamKey) -> f64 {
    let mut rng = key.rng();
    pareto_from_uniform(open_closed_unit(&mut rng), p)
}

/// One nonzero coordinate of a sparse noise vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseNoise {
    pub coord: usize,
    /// Signed value `s * scale * A`.
    pub value: f64,
}

impl SparseNoise {
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[self.coord] = self.value;
        v
    }
}

/// `zeta = s * scale * A * e_J`, deterministic per key.
pub fn sample_sparse_noise(dim: usize, p: f64, scale: f64, key: StreamKey) -> SparseNoise {
    let mut rng = key.rng();
    let coord = rng.random_range(0..dim);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let amplitude = pareto_from_uniform(open_closed_unit(&mut rng), p);
    SparseNoise {
        coord,
        value: sign * scale * amplitude,
    }
}

/// Symmetric `Z` with `|Z| = U^(-1/2)`, so `P(|Z| > t) = t^-2` for `t >= 1`.
pub fn sample_weak_l2(key: StreamKey) -> f64 {
    let mut rng = key.rng();
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    sign * pareto_from_uniform(open_closed_unit(&mut rng), 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(tag: &str, n: u64) -> impl Iterator<Item = StreamKey> {
        let base = StreamKey::root(2024).stream(tag);
        (0..n).map(move |i| base.index(i))
    }

    /// Binomial standard error of a frequency estimate.
    fn binom_se(prob: f64, n: f64) -> f64 {
        (prob * (1.0 - prob) / n).sqrt()
    }

    #[test]
    fn inverse_cdf_endpoint() {
        assert_eq!(pareto_from_uniform(1.0, 1.5), 1.0);
        assert_eq!(pareto_from_uniform(1.0, 2.0), 1.0);
    }

    #[test]
    fn pareto_median_matches_closed_form() {
        // median solves t^-p = 1/2
        let mut draws: Vec<f64> = keys("median", 100_000).map(|k| pareto_amplitude(1.5, k)).collect();
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        let expected = 2f64.powf(1.0 / 1.5);
        assert!((median - expected).abs() <= 0.03, "median {median} vs {expected}");
    }

    #[test]
    fn pareto_tail_frequency() {
        let n = 1_000_000u64;
        let hits = keys("tail", n).filter(|&k| pareto_amplitude(1.5, k) > 10.0).count();
        let freq = hits as f64 / n as f64;
        let expected = 10f64.powf(-1.5);
        assert!((freq - expected).abs() <= 3.0 * binom_se(expected, n as f64), "{freq}");
    }

    #[test]
    fn sparse_noise_structure() {
        for k in keys("structure", 2000) {
            let z = sample_sparse_noise(7, 1.8, 2.5, k);
            let dense = z.to_dense(7);
            assert_eq!(dense.iter().filter(|v| **v != 0.0).count(), 1);
            assert!(z.value.abs() >= 2.5);
        }
    }

    #[test]
    fn sparse_noise_coordinates_uniform() {
        let n = 100_000u64;
        let mut counts = [0u64; 4];
        for k in keys("coords", n) {
            counts[sample_sparse_noise(4, 1.5, 1.0, k).coord] += 1;
        }
        let se = binom_se(0.25, n as f64);
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() <= 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn sparse_noise_is_centered() {
        let n = 100_000u64;
        let d = 3;
        let mut sums = vec![Vec::with_capacity(n as usize); d];
        for k in keys("centered", n) {
            let z = sample_sparse_noise(d, 1.8, 1.0, k);
            for (j, col) in sums.iter_mut().enumerate() {
                col.push(if j == z.coord { z.value } else { 0.0 });
            }
        }
        for col in sums {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            assert!(mean.abs() <= 5.0 * se, "mean {mean} se {se}");
        }
    }

    #[test]
    fn weak_l2_support_and_tail() {
        let n = 1_000_000u64;
        let mut hits = 0u64;
        for k in keys("wl2", n) {
            let z = sample_weak_l2(k);
            assert!(z.abs() >= 1.0);
            if z.abs() > 4.0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 1.0 / 16.0).abs() <= 3.0 * binom_se(1.0 / 16.0, n as f64));
    }

    #[test]
    fn weak_l2_second_moment_keeps_growing() {
        // Infinite variance: E[Z^2 1{|Z| <= t}] = 2 ln t, so the running second
        // moment keeps climbing instead of settling. Track its median across
        // 20 seeds at n = 10^2 .. 10^6 and require an increase in at least 3 of
        // the 4 decade steps.
        let checkpoints = [100usize, 1_000, 10_000, 100_000, 1_000_000];
        let mut per_seed: Vec<Vec<f64>> = Vec::new();
        for seed in 0..20u64 {
            let base = StreamKey::root(seed).stream("wl2-moment");
            let mut sum = 0.0;
            let mut moments = Vec::new();
            let mut next = 0;
            for i in 0..checkpoints[4] {
                let z = sample_weak_l2(base.index(i as u64));
                sum += z * z;
                if i + 1 == checkpoints[next] {
                    moments.push(sum / (i + 1) as f64);
                    next += 1;
                }
            }
            per_seed.push(moments);
        }
        let medians: Vec<f64> = (0..checkpoints.len())
            .map(|c| {
                let mut col: Vec<f64> = per_seed.iter().map(|m| m[c]).collect();
                col.sort_by(f64::total_cmp);
                0.5 * (col[9] + col[10])
            })
            .collect();
        let ups = medians.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups >= 3, "median running second moments {medians:?}");
    }

    #[test]
    fn validation() {
        assert!(NoiseModel::sparse_pareto(1.0).is_err());
        assert!(NoiseModel::sparse_pareto_scaled(1.5, 0.0).is_err());
        assert_eq!(NoiseModel::sparse_pareto_scaled(1.5, 2.0).unwrap().sigma(), 2.0);
        assert_eq!(NoiseModel::WeakL2.tail_exponent(), Some(2.0));
    }
}
