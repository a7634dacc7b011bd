//! Exact Gaussian path simulation on the grid `t_j = j delta`, `j = 1..=n`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::PathSample;
use crate::models::{DriftSpec, ModelSpec};
use crate::quadrature::GaussHermite;
use crate::seqalg::VariationSequence;

pub const DEFAULT_JITTER: f64 = 1e-12;
pub const MAX_JITTER: f64 = 1e-9;

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

/// Simulation settings, read from JSON such as
/// `{"model": {"model": "exp", "C": 3}, "n": 200, "alpha": 1, "seed": 7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl SimConfig {
    pub fn new(model: ModelSpec, n: usize, delta: f64, seed: u64) -> Self {
        Self {
            model,
            n,
            delta: Some(delta),
            alpha: None,
            drift: None,
            seed,
            jitter: DEFAULT_JITTER,
        }
    }

    /// Grid `delta = n^(-alpha)`.
    pub fn with_alpha(model: ModelSpec, n: usize, alpha: f64, seed: u64) -> Self {
        Self {
            delta: None,
            alpha: Some(alpha),
            ..Self::new(model, n, 1.0, seed)
        }
    }

    pub fn with_drift(mut self, drift: Option<DriftSpec>) -> Self {
        self.drift = drift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "n = {} must be at least 2",
                self.n
            )));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "alpha = {alpha} must lie in (0, 1]"
                )));
            }
        }
        if self.delta.is_some() && self.alpha.is_some() {
            return Err(Error::InvalidParameter(
                "give either delta or alpha, not both".into(),
            ));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "jitter = {} must be >= 0",
                self.jitter
            )));
        }
        let delta = self.grid_step();
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        Ok(())
    }

    /// `delta`, or `n^(-alpha)` (`alpha = 1` when neither is given).
    pub fn grid_step(&self) -> f64 {
        match (self.delta, self.alpha) {
            (Some(d), _) => d,
            (None, Some(a)) => (self.n as f64).powf(-a),
            (None, None) => 1.0 / self.n as f64,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let delta = self.grid_step();
        (1..=self.n).map(|j| j as f64 * delta).collect()
    }
}

/// `K_{jk} = Cov(X(t_j), X(t_k))`.
pub fn covariance_matrix(model: &ModelSpec, times: &[f64]) -> Result<DMatrix<f64>> {
    model.validate()?;
    if let ModelSpec::Fbm { .. } = model {
        if let Some(t) = times.iter().find(|t| **t <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fbm is observed at positive times only (X(0) = 0), got t = {t}"
            )));
        }
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(
            "observation times must be distinct".into(),
        ));
    }
    let n = times.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        model.covariance(times[i], times[j])
    }))
}

/// Cholesky factorization; on failure `jitter * max diag` is added to the
/// diagonal and escalated tenfold up to [`MAX_JITTER`]. Returns the factor and
/// the relative jitter that was applied, if any.
pub fn factorize(cov: &DMatrix<f64>, jitter: f64) -> Result<(Cholesky<f64, Dyn>, Option<f64>)> {
    if let Some(c) = cov.clone().cholesky() {
        return Ok((c, None));
    }
    let max_diag = cov.diagonal().max();
    let mut level = if jitter > 0.0 { jitter } else { DEFAULT_JITTER };
    while level <= MAX_JITTER * (1.0 + 1e-9) {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += level * max_diag;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c, Some(level)));
        }
        level *= 10.0;
    }
    Err(Error::Factorization(format!(
        "covariance matrix of size {} is not positive definite even with relative jitter {MAX_JITTER:e}",
        cov.nrows()
    )))
}

/// Shared factor of one simulation grid.
///
/// The process is factorized through its `m`-th differences
/// `W_j = sum_k (-1)^k C(m, k) X_{j-k}` (with `m = D + 1` from the model's
/// local behavior), whose covariance is far better conditioned than that of
/// `X` for smooth models. `X` is recovered by inverting the banded
/// difference operator; the composite map is a lower-triangular factor of
/// the covariance of `X`.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: SimConfig,
    delta: f64,
    factor: DMatrix<f64>,
    diff: Vec<f64>,
    jitter_applied: Option<f64>,
}

impl Sampler {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let delta = config.grid_step();
        let times = config.times();
        let m = (config.model.local_behavior().d + 1).min(n - 1);
        let diff = VariationSequence::elementary(m)?
            .coefficients()
            .iter()
            .rev()
            .copied()
            .collect::<Vec<_>>();
        // diff[k] = (-1)^k C(m, k)
        let k = covariance_matrix(&config.model, &times)?;
        let b = VariationSequence::elementary(m)?.self_convolution();
        let lag_cov: Vec<f64> = (0..n as i64)
            .map(|h| {
                -b.iter()
                    .map(|(l, bl)| bl * config.model.semivariogram((h + l) as f64 * delta))
                    .sum::<f64>()
            })
            .collect();
        let row_of =
            |j: usize| -> Vec<(usize, f64)> { (0..=m.min(j)).map(|kk| (j - kk, diff[kk])).collect() };
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = if j >= m {
                    lag_cov[i - j]
                } else {
                    let mut acc = 0.0;
                    for (p, cp) in row_of(i) {
                        for (q, cq) in row_of(j) {
                            acc += cp * cq * k[(p, q)];
                        }
                    }
                    acc
                };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let (chol, jitter_applied) = factorize(&w, config.jitter)?;
        Ok(Self {
            config: config.clone(),
            delta,
            factor: chol.unpack(),
            diff,
            jitter_applied,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Relative jitter that was needed to factorize, if any.
    pub fn jitter_applied(&self) -> Option<f64> {
        self.jitter_applied
    }

    /// Zero-mean draw for replicate `replicate` of stream `seed`.
    pub fn sample_centered(&self, seed: u64, replicate: u64) -> Vec<f64> {
        let n = self.config.n;
        let z = standard_normals(seed, replicate, n);
        let mut w = vec![0.0; n];
        for (i, wi) in w.iter_mut().enumerate() {
            let row = self.factor.row(i);
            let mut acc = 0.0;
            for j in 0..=i {
                acc += row[j] * z[j];
            }
            *wi = acc;
        }
        // X_j = W_j - sum_{k >= 1} diff[k] X_{j-k}
        let mut x = vec![0.0; n];
        for j in 0..n {
            let mut v = w[j];
            for k in 1..self.diff.len().min(j + 1) {
                v -= self.diff[k] * x[j - k];
            }
            x[j] = v;
        }
        x
    }

    /// Draw with the configured drift (or `drift` when given) added.
    pub fn sample_with_drift(&self, seed: u64, replicate: u64, drift: Option<&DriftSpec>) -> PathSample {
        let mut values = self.sample_centered(seed, replicate);
        if let Some(f) = drift {
            for (j, v) in values.iter_mut().enumerate() {
                *v += f.value((j + 1) as f64 * self.delta);
            }
        }
        let mut p = PathSample::new(self.delta, values).expect("valid grid");
        p.alpha = self.config.alpha;
        p
    }

    pub fn sample(&self, replicate: u64) -> PathSample {
        self.sample_with_drift(self.config.seed, replicate, self.config.drift.as_ref())
    }

    /// Replicates `0..count`, generated in parallel and returned in order.
    pub fn sample_many(&self, count: usize) -> Vec<PathSample> {
        (0..count as u64)
            .into_par_iter()
            .map(|r| self.sample(r))
            .collect()
    }
}

/// Standard normal vector for replicate `replicate`: ChaCha20 keyed by
/// `seed` with the replicate index as stream number, so every replicate is
/// reproducible on its own.
pub fn standard_normals(seed: u64, replicate: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `count` exact draws of the configured process.
pub fn sample_paths(config: &SimConfig, count: usize) -> Result<Vec<PathSample>> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "number of replicates must be >= 1".into(),
        ));
    }
    Ok(Sampler::new(config)?.sample_many(count))
}

/// `(Cov(X^2, Y^2), 2 Cov(X, Y)^2)` for a centered Gaussian pair, the left
/// side by 40 x 40 Gauss–Hermite quadrature.
pub fn gaussian_pair_moment_check(cov: [[f64; 2]; 2]) -> (f64, f64) {
    let gh = GaussHermite::new(40);
    let s1 = cov[0][0].max(0.0).sqrt();
    let s2 = cov[1][1].max(0.0).sqrt();
    let rho = if s1 > 0.0 && s2 > 0.0 {
        (cov[0][1] / (s1 * s2)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let comp = (1.0 - rho * rho).max(0.0).sqrt();
    let mut exy = 0.0;
    let mut ex = 0.0;
    let mut ey = 0.0;
    for (&u, &wu) in gh.nodes().iter().zip(gh.weights()) {
        for (&v, &wv) in gh.nodes().iter().zip(gh.weights()) {
            let x = s1 * u;
            let y = s2 * (rho * u + comp * v);
            let w = wu * wv;
            exy += w * x * x * y * y;
            ex += w * x * x;
            ey += w * y * y;
        }
    }
    (exy - ex * ey, 2.0 * cov[0][1] * cov[0][1])
}
