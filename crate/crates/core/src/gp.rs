//! Zero-mean Gaussian-process regression with per-point noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{gram, kernel_vector, KernelSpec};
use crate::linalg::{cholesky_with_jitter, Factor};
use crate::points::Points;

pub use crate::linalg::JitterPolicy;

/// Relative size of a negative posterior variance that is treated as rounding.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// Training data: inputs, targets and a per-point noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Points,
    pub targets: Vec<f64>,
    pub noise: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Points, targets: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() || targets.len() != noise.len() {
            return Err(Error::Shape(format!(
                "dataset has {} inputs, {} targets and {} noise values",
                inputs.len(),
                targets.len(),
                noise.len()
            )));
        }
        if let Some(v) = noise.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "noise variances must be non-negative, got {v}"
            )));
        }
        Ok(Self {
            inputs,
            targets,
            noise,
        })
    }

    /// Interpolation data without observation noise.
    pub fn noiseless(inputs: Points, targets: Vec<f64>) -> Result<Self> {
        let n = targets.len();
        Self::new(inputs, targets, vec![0.0; n])
    }

    /// Constant noise variance on every point.
    pub fn homoscedastic(inputs: Points, targets: Vec<f64>, noise: f64) -> Result<Self> {
        let n = targets.len();
        Self::new(inputs, targets, vec![noise; n])
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Factorized GP posterior.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    spec: KernelSpec,
    train: Dataset,
    factor: Factor,
    alpha: DVector<f64>,
}

impl GpPosterior {
    pub fn fit(spec: &KernelSpec, data: Dataset, policy: &JitterPolicy) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("GP fit needs at least one observation".into()));
        }
        let mut k = gram(spec, &data.inputs)?.into_inner();
        for (i, s) in data.noise.iter().enumerate() {
            k[(i, i)] += s;
        }
        let factor = cholesky_with_jitter(&k, policy)?;
        let alpha = factor.solve(&DVector::from_column_slice(&data.targets));
        Ok(Self {
            spec: *spec,
            train: data,
            factor,
            alpha,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    /// Jitter added to the diagonal on top of the noise.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// Residual weights `(K + D + jitter I)^{-1} y`.
    pub fn alpha(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    /// Lower Cholesky factor of `K + D + jitter I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    /// `(K + D + jitter I)^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.train.len() {
            return Err(Error::Shape(format!(
                "right-hand side of length {} for {} training points",
                b.len(),
                self.train.len()
            )));
        }
        Ok(self
            .factor
            .solve(&DVector::from_column_slice(b))
            .as_slice()
            .to_vec())
    }

    fn cross(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(kernel_vector(
            &self.spec,
            x,
            &self.train.inputs,
        )?))
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cross(x)?.dot(&self.alpha))
    }

    /// Posterior covariance `k_N(x, x')`. When `x == x'` the value is a
    /// variance and is clamped like [`GpPosterior::predict_var`].
    pub fn predict_cov(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x == y {
            return self.predict_var(x);
        }
        let kx = self.cross(x)?;
        let ky = self.cross(y)?;
        let prior = self.spec.eval(x, y)?;
        Ok(prior - kx.dot(&self.factor.solve(&ky)))
    }

    pub fn predict_var(&self, x: &[f64]) -> Result<f64> {
        let kx = self.cross(x)?;
        let prior = self.spec.eval(x, x)?;
        let v = self.factor.solve_lower(&kx);
        clamp_variance(prior - v.norm_squared(), prior)
    }

    /// Posterior covariance matrix over a set of query points.
    pub fn predict_cov_matrix(&self, queries: &Points) -> Result<DMatrix<f64>> {
        let mut v = DMatrix::zeros(self.train.len(), queries.len());
        for (j, q) in queries.rows().enumerate() {
            v.set_column(j, &self.factor.solve_lower(&self.cross(q)?));
        }
        let mut cov = gram(&self.spec, queries)?.into_inner() - v.transpose() * v;
        for i in 0..queries.len() {
            let prior = self.spec.eval_unchecked(queries.row(i), queries.row(i));
            cov[(i, i)] = clamp_variance(cov[(i, i)], prior)?;
        }
        Ok(cov)
    }
}

/// Sets rounding-level negative variances to zero and rejects larger ones.
pub(crate) fn clamp_variance(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -VARIANCE_CLAMP * scale.abs() {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(value))
    }
}

/// Gaussian log marginal likelihood `-1/2 [y^T (K+D)^{-1} y + log|K+D| + N log 2 pi]`.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    data: &Dataset,
    policy: &JitterPolicy,
) -> Result<f64> {
    let post = GpPosterior::fit(spec, data.clone(), policy)?;
    Ok(post.log_marginal_likelihood())
}

impl GpPosterior {
    pub fn log_marginal_likelihood(&self) -> f64 {
        let y = DVector::from_column_slice(&self.train.targets);
        let n = self.train.len() as f64;
        -0.5 * (y.dot(&self.alpha) + self.factor.log_det() + n * (2.0 * std::f64::consts::PI).ln())
    }
}
