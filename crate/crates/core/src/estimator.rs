//! Two-point zeroth-order gradient estimators.
//!
//! For a batch of `M` directions `u_l` on the unit sphere and noise samples
//! `xi_l`, the directional estimates are
//!
//! ```text
//! Y_l = (F(x + mu u_l; xi_l) - F(x - mu u_l; xi_l)) / (2 mu)
//! ```
//!
//! and the three aggregations are
//!
//! * raw:         `g = (d/M) sum Y_l u_l`
//! * vector clip: `g = clip_r((d/M) sum Y_l u_l)` (rescale the aggregate)
//! * scalar clip: `g = (d/M) sum psi_tau(Y_l) u_l` (clip before averaging)

use rand::Rng;
use rand_distr::StandardNormal;

use crate::oracle::{Oracle, OracleError, SampleKey};
use crate::rng::StreamKey;
use crate::vecops;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("oracle failed on sample {key}: {source}")]
    Oracle {
        key: SampleKey,
        #[source]
        source: OracleError,
    },
    #[error("non-finite directional value {value} on sample {key}")]
    NonFiniteValue { key: SampleKey, value: f64 },
    #[error("non-finite input to clipping: {0}")]
    NonFiniteInput(f64),
    #[error("batch size must be positive")]
    EmptyBatch,
    #[error("clipping threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("smoothing radius must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Scalar clip `psi_tau(z) = z min(1, tau/|z|)`.
pub fn psi_tau(z: f64, tau: f64) -> Result<f64, EstimatorError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(EstimatorError::InvalidThreshold(tau));
    }
    if !z.is_finite() {
        return Err(EstimatorError::NonFiniteInput(z));
    }
    Ok(clip_scalar(z, tau))
}

/// Unchecked `psi_tau` for validated inputs.
#[inline]
pub(crate) fn clip_scalar(z: f64, tau: f64) -> f64 {
    if z.abs() <= tau {
        z
    } else {
        tau.copysign(z)
    }
}

/// Rescales `v` onto the ball of radius `r` if it lies outside.
pub fn vector_clip(v: &[f64], r: f64) -> Result<Vec<f64>, EstimatorError> {
    let mut out = v.to_vec();
    vector_clip_in_place(&mut out, r)?;
    Ok(out)
}

/// In-place [`vector_clip`]; returns whether the vector was rescaled.
pub fn vector_clip_in_place(v: &mut [f64], r: f64) -> Result<bool, EstimatorError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(EstimatorError::InvalidThreshold(r));
    }
    if let Some(bad) = v.iter().find(|c| !c.is_finite()) {
        return Err(EstimatorError::NonFiniteInput(*bad));
    }
    let n = vecops::norm(v);
    if n <= r {
        return Ok(false);
    }
    vecops::scale(r / n, v);
    Ok(true)
}

/// Unit vector in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `v`; `None` for the zero vector or non-finite input.
    pub fn from_vec(mut v: Vec<f64>) -> Option<Self> {
        let n = vecops::norm(&v);
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        vecops::scale(1.0 / n, &mut v);
        Some(Direction(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn fill_normal(key: StreamKey, out: &mut [f64]) {
    let mut rng = key.rng();
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Writes a uniform unit vector for `key` into `out` (normalized Gaussian).
pub fn sample_sphere_into(key: StreamKey, out: &mut [f64]) {
    assert!(!out.is_empty(), "sphere dimension must be positive");
    let mut k = key;
    let mut attempt = 0u64;
    loop {
        fill_normal(k, out);
        let n = vecops::norm(out);
        if n > 0.0 && n.is_finite() {
            if out.len() == 1 {
                // S^0 = {-1, +1} exactly
                out[0] = out[0].signum();
            } else {
                vecops::scale(1.0 / n, out);
            }
            return;
        }
        attempt += 1;
        k = key.stream("resample").index(attempt);
    }
}

/// Uniform direction on `S^{d-1}`, deterministic per key.
pub fn sample_sphere(d: usize, key: StreamKey) -> Direction {
    let mut v = vec![0.0; d];
    sample_sphere_into(key, &mut v);
    Direction(v)
}

/// Supplies the direction for batch member `l` of a batch keyed by `key`.
pub trait DirectionSource: Sync {
    fn fill(&self, key: StreamKey, index: usize, out: &mut [f64]);
}

/// Production source: independent uniform directions.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformSphere;

impl DirectionSource for UniformSphere {
    fn fill(&self, key: StreamKey, _index: usize, out: &mut [f64]) {
        sample_sphere_into(key, out);
    }
}

/// Cycles through a fixed list of directions. Used to inject known batches.
#[derive(Clone, Debug)]
pub struct FixedDirections(pub Vec<Direction>);

impl DirectionSource for FixedDirections {
    fn fill(&self, _key: StreamKey, index: usize, out: &mut [f64]) {
        out.copy_from_slice(self.0[index % self.0.len()].as_slice());
    }
}

/// One two-point directional estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalSample {
    pub direction: Direction,
    pub sample_key: SampleKey,
    pub y: f64,
}

fn checked_mu(mu: f64) -> Result<(), EstimatorError> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(EstimatorError::InvalidSmoothing(mu))
    }
}

/// `(F(x + mu u) - F(x - mu u)) / (2 mu)` with a shared sample, using
/// caller-provided scratch buffers.
fn central_difference<O: Oracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    u: &[f64],
    mu: f64,
    key: SampleKey,
    plus: &mut [f64],
    minus: &mut [f64],
) -> Result<f64, EstimatorError> {
    for ((p, m), (xi, ui)) in plus.iter_mut().zip(minus.iter_mut()).zip(x.iter().zip(u)) {
        *p = xi + mu * ui;
        *m = xi - mu * ui;
    }
    let fp = oracle
        .evaluate(plus, key)
        .map_err(|source| EstimatorError::Oracle { key, source })?;
    let fm = oracle
        .evaluate(minus, key)
        .map_err(|source| EstimatorError::Oracle { key, source })?;
    if !fp.is_finite() {
        return Err(EstimatorError::NonFiniteValue { key, value: fp });
    }
    if !fm.is_finite() {
        return Err(EstimatorError::NonFiniteValue { key, value: fm });
    }
    let y = (fp - fm) / (2.0 * mu);
    if !y.is_finite() {
        return Err(EstimatorError::NonFiniteValue { key, value: y });
    }
    Ok(y)
}

pub fn two_point_directional<O: Oracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    direction: &Direction,
    mu: f64,
    sample_key: SampleKey,
) -> Result<DirectionalSample, EstimatorError> {
    checked_mu(mu)?;
    if x.len() != direction.dim() {
        return Err(EstimatorError::DimensionMismatch {
            expected: x.len(),
            got: direction.dim(),
        });
    }
    let mut plus = vec![0.0; x.len()];
    let mut minus = vec![0.0; x.len()];
    let y = central_difference(oracle, x, direction.as_slice(), mu, sample_key, &mut plus, &mut minus)?;
    Ok(DirectionalSample {
        direction: direction.clone(),
        sample_key,
        y,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Raw,
    VectorClip,
    ScalarClip,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Raw => "raw",
            EstimatorKind::VectorClip => "vector_clip",
            EstimatorKind::ScalarClip => "scalar_clip",
        }
    }
}

/// Aggregation rule with its threshold.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Aggregation {
    Raw,
    VectorClip { radius: f64 },
    ScalarClip { tau: f64 },
}

impl Aggregation {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Aggregation::Raw => EstimatorKind::Raw,
            Aggregation::VectorClip { .. } => EstimatorKind::VectorClip,
            Aggregation::ScalarClip { .. } => EstimatorKind::ScalarClip,
        }
    }

    /// `tau` or `r_vec`; `None` for raw.
    pub fn threshold(&self) -> Option<f64> {
        match *self {
            Aggregation::Raw => None,
            Aggregation::VectorClip { radius } => Some(radius),
            Aggregation::ScalarClip { tau } => Some(tau),
        }
    }

    /// Builds the aggregation for `kind`; the threshold is required for the
    /// clipped modes and ignored for raw.
    pub fn from_kind(kind: EstimatorKind, threshold: Option<f64>) -> Result<Self, EstimatorError> {
        let need = |t: Option<f64>| match t {
            Some(v) if v > 0.0 && v.is_finite() => Ok(v),
            Some(v) => Err(EstimatorError::InvalidThreshold(v)),
            None => Err(EstimatorError::InvalidThreshold(f64::NAN)),
        };
        Ok(match kind {
            EstimatorKind::Raw => Aggregation::Raw,
            EstimatorKind::VectorClip => Aggregation::VectorClip { radius: need(threshold)? },
            EstimatorKind::ScalarClip => Aggregation::ScalarClip { tau: need(threshold)? },
        })
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        match self.threshold() {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(EstimatorError::InvalidThreshold(t)),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub kind: EstimatorKind,
    pub batch_size: usize,
    /// Scalar clip: number of `|Y_l| > tau`. Vector clip: 1 if the aggregate
    /// was rescaled. Raw: 0.
    pub clipped_count: usize,
    /// Pre-clip `Y_l` in batch order.
    pub raw_scalars: Vec<f64>,
}

impl GradientEstimate {
    /// Share of clipped entities: `clipped_count / M` for scalar clipping,
    /// the 0/1 rescale flag for vector clipping.
    pub fn clipped_fraction(&self) -> f64 {
        match self.kind {
            EstimatorKind::Raw => 0.0,
            EstimatorKind::VectorClip => self.clipped_count as f64,
            EstimatorKind::ScalarClip => self.clipped_count as f64 / self.batch_size as f64,
        }
    }
}

/// A batch of directions and their two-point values, before aggregation.
/// Holding the batch lets several aggregations be compared on identical
/// randomness.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalBatch {
    dim: usize,
    /// Row-major `M x d`.
    directions: Vec<f64>,
    ys: Vec<f64>,
    keys: Vec<SampleKey>,
}

/// Key of the direction of batch member `l`.
#[inline]
pub fn direction_key(batch_key: StreamKey, l: usize) -> StreamKey {
    batch_key.index(l as u64).stream("dir")
}

/// Noise-sample key of batch member `l`.
#[inline]
pub fn sample_key(batch_key: StreamKey, l: usize) -> SampleKey {
    SampleKey(batch_key.index(l as u64).stream("xi").value())
}

impl DirectionalBatch {
    /// Draws `m` directions and evaluates their two-point values at `x`
    /// (`2m` oracle calls).
    pub fn sample<O: Oracle + ?Sized>(
        oracle: &O,
        x: &[f64],
        mu: f64,
        m: usize,
        key: StreamKey,
    ) -> Result<Self, EstimatorError> {
        Self::sample_with(oracle, x, mu, m, key, &UniformSphere)
    }

    pub fn sample_with<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
        oracle: &O,
        x: &[f64],
        mu: f64,
        m: usize,
        key: StreamKey,
        source: &S,
    ) -> Result<Self, EstimatorError> {
        checked_mu(mu)?;
        if m == 0 {
            return Err(EstimatorError::EmptyBatch);
        }
        let d = x.len();
        if oracle.dim() != d {
            return Err(EstimatorError::DimensionMismatch {
                expected: oracle.dim(),
                got: d,
            });
        }
        let mut directions = vec![0.0; m * d];
        let mut ys = Vec::with_capacity(m);
        let mut keys = Vec::with_capacity(m);
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        for (l, u) in directions.chunks_exact_mut(d).enumerate() {
            source.fill(direction_key(key, l), l, u);
            let k = sample_key(key, l);
            ys.push(central_difference(oracle, x, u, mu, k, &mut plus, &mut minus)?);
            keys.push(k);
        }
        Ok(Self {
            dim: d,
            directions,
            ys,
            keys,
        })
    }

    /// Batch from explicit directions and directional values.
    pub fn from_parts(directions: Vec<Direction>, ys: Vec<f64>) -> Result<Self, EstimatorError> {
        if directions.is_empty() {
            return Err(EstimatorError::EmptyBatch);
        }
        if directions.len() != ys.len() {
            return Err(EstimatorError::DimensionMismatch {
                expected: directions.len(),
                got: ys.len(),
            });
        }
        let dim = directions[0].dim();
        let mut flat = Vec::with_capacity(dim * directions.len());
        for u in &directions {
            if u.dim() != dim {
                return Err(EstimatorError::DimensionMismatch { expected: dim, got: u.dim() });
            }
            flat.extend_from_slice(u.as_slice());
        }
        if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
            return Err(EstimatorError::NonFiniteInput(*bad));
        }
        let keys = (0..ys.len() as u64).map(SampleKey).collect();
        Ok(Self {
            dim,
            directions: flat,
            ys,
            keys,
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn direction(&self, l: usize) -> &[f64] {
        &self.directions[l * self.dim..(l + 1) * self.dim]
    }

    pub fn member(&self, l: usize) -> DirectionalSample {
        DirectionalSample {
            direction: Direction(self.direction(l).to_vec()),
            sample_key: self.keys[l],
            y: self.ys[l],
        }
    }

    /// Aggregates in index order `l = 0..M`.
    pub fn aggregate(&self, agg: Aggregation) -> Result<GradientEstimate, EstimatorError> {
        agg.validate()?;
        let m = self.len();
        let d = self.dim;
        let weight = d as f64 / m as f64;
        let mut g = vec![0.0; d];
        let mut clipped_count = 0;
        match agg {
            Aggregation::ScalarClip { tau } => {
                for (l, &y) in self.ys.iter().enumerate() {
                    if y.abs() > tau {
                        clipped_count += 1;
                    }
                    vecops::axpy(clip_scalar(y, tau), self.direction(l), &mut g);
                }
            }
            Aggregation::Raw | Aggregation::VectorClip { .. } => {
                for (l, &y) in self.ys.iter().enumerate() {
                    vecops::axpy(y, self.direction(l), &mut g);
                }
            }
        }
        vecops::scale(weight, &mut g);
        if let Aggregation::VectorClip { radius } = agg {
            if vector_clip_in_place(&mut g, radius)? {
                clipped_count = 1;
            }
        }
        Ok(GradientEstimate {
            g,
            kind: agg.kind(),
            batch_size: m,
            clipped_count,
            raw_scalars: self.ys.clone(),
        })
    }
}

/// One gradient estimate with `2M` oracle calls.
pub fn estimate_gradient<O: Oracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    mu: f64,
    m: usize,
    agg: Aggregation,
    key: StreamKey,
) -> Result<GradientEstimate, EstimatorError> {
    agg.validate()?;
    DirectionalBatch::sample(oracle, x, mu, m, key)?.aggregate(agg)
}

/// As [`estimate_gradient`] with a custom direction source.
pub fn estimate_gradient_with<O: Oracle + ?Sized, S: DirectionSource + ?Sized>(
    oracle: &O,
    x: &[f64],
    mu: f64,
    m: usize,
    agg: Aggregation,
    key: StreamKey,
    source: &S,
) -> Result<GradientEstimate, EstimatorError> {
    agg.validate()?;
    DirectionalBatch::sample_with(oracle, x, mu, m, key, source)?.aggregate(agg)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Monte Carlo estimate of `f_mu(x) = E_{v ~ Unif(B^d)} f(x + mu v)`.
pub fn smoothed_value_mc<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    mu: f64,
    n_mc: usize,
    key: StreamKey,
) -> Result<MonteCarloEstimate, EstimatorError> {
    checked_mu(mu)?;
    if n_mc == 0 {
        return Err(EstimatorError::EmptyBatch);
    }
    let d = x.len();
    let mut v = vec![0.0; d];
    let mut point = vec![0.0; d];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..n_mc {
        let k = key.index(i as u64);
        sample_sphere_into(k.stream("dir"), &mut v);
        // radius of a uniform point in the unit ball: U^(1/d)
        let radius = k.stream("radius").rng().random::<f64>().powf(1.0 / d as f64);
        for ((p, xi), vi) in point.iter_mut().zip(x).zip(&v) {
            *p = xi + mu * radius * vi;
        }
        let value = f(&point);
        sum += value;
        sum_sq += value * value;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = if n_mc > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_err: (var / n).sqrt(),
        n: n_mc,
    })
}
