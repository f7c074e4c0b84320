//! Kernel mean embeddings, Bayesian quadrature and optimally-weighted MMD.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{clamp_variance, JitterPolicy};
use crate::kernels::{gram, KernelFamily, KernelSpec};
use crate::linalg::cholesky_with_jitter;
use crate::mmd::{mmd2_weighted, EmpiricalMeasure};
use crate::points::Points;
use crate::rng::RngStream;

/// Integration measures with closed-form embeddings for some kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    /// `N(mean, cov)` on `R^d`.
    Gaussian { mean: Vec<f64>, cov: DMatrix<f64> },
    /// Lebesgue measure on `[0, t]` (total mass `t`, not normalized).
    LebesgueInterval { t: f64 },
    /// Uniform probability measure on the box `[lo, hi]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl Measure {
    pub fn gaussian(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "Gaussian measure with mean of length {d} and {}x{} covariance",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("covariance is not symmetric".into()));
        }
        let min_eig = cov.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "covariance has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Measure::Gaussian { mean, cov })
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Measure::Gaussian {
            mean: vec![0.0; d],
            cov: DMatrix::identity(d, d),
        }
    }

    pub fn lebesgue(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("interval end must be positive, got {t}")));
        }
        Ok(Measure::LebesgueInterval { t })
    }

    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Shape("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("box needs lo < hi in every coordinate".into()));
        }
        Ok(Measure::UniformBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian { mean, .. } => mean.len(),
            Measure::LebesgueInterval { .. } => 1,
            Measure::UniformBox { lo, .. } => lo.len(),
        }
    }

    /// Total mass: 1 for probability measures, `t` for Lebesgue on `[0, t]`.
    pub fn mass(&self) -> f64 {
        match self {
            Measure::LebesgueInterval { t } => *t,
            _ => 1.0,
        }
    }

    /// `n` i.i.d. draws from the normalized measure.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Points> {
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        match self {
            Measure::Gaussian { mean, cov } => {
                let root = psd_root(cov)?;
                for _ in 0..n {
                    let z = DVector::from_vec(rng.normal(d));
                    let x = &root * z;
                    data.extend(x.iter().zip(mean).map(|(v, m)| v + m));
                }
            }
            Measure::LebesgueInterval { t } => {
                data.extend(rng.uniform(n).into_iter().map(|u| u * t));
            }
            Measure::UniformBox { lo, hi } => {
                for _ in 0..n {
                    for k in 0..d {
                        data.push(lo[k] + (hi[k] - lo[k]) * rng.next_uniform());
                    }
                }
            }
        }
        Points::new(data, d)
    }
}

/// Square root `A` with `A A^T = cov`; Cholesky when possible, otherwise via
/// the symmetric eigendecomposition (covariances may be singular).
fn psd_root(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

fn std_normal_cdf_minus_half(z: f64) -> f64 {
    0.5 * libm::erf(z / SQRT_2)
}

/// A kernel paired with a measure whose embedding has a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEmbedding {
    kernel: KernelSpec,
    measure: Measure,
}

impl KernelEmbedding {
    /// Fails with an unsupported-pair error unless the pair is one of
    /// Gaussian/Gaussian, Brownian/Lebesgue or Gaussian/uniform box.
    pub fn new(kernel: KernelSpec, measure: Measure) -> Result<Self> {
        let ok = matches!(
            (&kernel.family, &measure),
            (KernelFamily::Gaussian, Measure::Gaussian { .. })
                | (KernelFamily::Brownian, Measure::LebesgueInterval { .. })
                | (KernelFamily::Gaussian, Measure::UniformBox { .. })
        );
        if !ok {
            return Err(Error::UnsupportedPair(format!(
                "no closed-form embedding for kernel {kernel} with measure {measure:?}"
            )));
        }
        Ok(Self { kernel, measure })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    /// Same measure, different kernel amplitude or lengthscale.
    pub fn with_kernel(&self, kernel: KernelSpec) -> Result<Self> {
        Self::new(kernel, self.measure.clone())
    }

    /// `mu(x) = int k(x, x') P(dx')`.
    pub fn kme_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "embedding of a {}-d measure queried at a {}-d point",
                self.dim(),
                x.len()
            )));
        }
        self.kernel.check_point(x)?;
        let tau2 = self.kernel.amplitude;
        let l = self.kernel.lengthscale;
        Ok(match &self.measure {
            Measure::Gaussian { mean, cov } => {
                let d = mean.len();
                let l2 = l * l;
                let a = cov + DMatrix::identity(d, d) * l2;
                let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
                let chol = a
                    .cholesky()
                    .ok_or_else(|| Error::InvalidParameter("covariance plus l^2 I is not positive definite".into()))?;
                let quad = diff.dot(&chol.solve(&diff));
                let det = (DMatrix::identity(d, d) + cov / l2).determinant();
                tau2 * det.powf(-0.5) * (-0.5 * quad).exp()
            }
            Measure::LebesgueInterval { t } => {
                let s = x[0].min(*t);
                tau2 * (t * s - s * s / 2.0)
            }
            Measure::UniformBox { lo, hi } => {
                let c = l * (PI / 2.0).sqrt();
                let mut prod = tau2;
                for k in 0..lo.len() {
                    let (a, b) = (lo[k], hi[k]);
                    let upper = libm::erf((b - x[k]) / (SQRT_2 * l));
                    let lower = libm::erf((a - x[k]) / (SQRT_2 * l));
                    prod *= c * (upper - lower) / (b - a);
                }
                prod
            }
        })
    }

    pub fn kme_vector(&self, nodes: &Points) -> Result<Vec<f64>> {
        nodes.rows().map(|x| self.kme_eval(x)).collect()
    }

    /// `int int k(x, x') P(dx) P(dx')`.
    pub fn initial_error(&self) -> f64 {
        let tau2 = self.kernel.amplitude;
        let l = self.kernel.lengthscale;
        match &self.measure {
            Measure::Gaussian { cov, .. } => {
                let d = cov.nrows();
                let det = (DMatrix::identity(d, d) + cov * (2.0 / (l * l))).determinant();
                tau2 * det.powf(-0.5)
            }
            Measure::LebesgueInterval { t } => tau2 * t.powi(3) / 3.0,
            Measure::UniformBox { lo, hi } => {
                let mut prod = tau2;
                for k in 0..lo.len() {
                    let w = hi[k] - lo[k];
                    let inner = w * l * (2.0 * PI).sqrt() * std_normal_cdf_minus_half(w / l)
                        - l * l * (1.0 - (-w * w / (2.0 * l * l)).exp());
                    prod *= 2.0 * inner / (w * w);
                }
                prod
            }
        }
    }
}

/// Sample-average embedding, for checking closed forms in tests. It is never
/// substituted for a [`KernelEmbedding`] automatically.
#[derive(Debug, Clone)]
pub struct MonteCarloEmbedding {
    pub kernel: KernelSpec,
    pub samples: Points,
    pub mass: f64,
    pub seed: u64,
}

impl MonteCarloEmbedding {
    pub fn new(kernel: KernelSpec, measure: &Measure, n: usize, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed).split("mc-embedding");
        Ok(Self {
            kernel,
            samples: measure.sample(n, &mut rng)?,
            mass: measure.mass(),
            seed,
        })
    }

    pub fn kme_eval(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for s in self.samples.rows() {
            acc += self.kernel.eval(x, s)?;
        }
        Ok(self.mass * acc / self.samples.len() as f64)
    }

    /// Average of `k(s_i, s_{i+1})` over consecutive disjoint pairs.
    pub fn initial_error(&self) -> Result<f64> {
        let n = self.samples.len() / 2;
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.kernel.eval(self.samples.row(2 * i), self.samples.row(2 * i + 1))?;
        }
        Ok(self.mass * self.mass * acc / n as f64)
    }
}

/// Nodes and weights of a kernel quadrature rule.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Points,
    pub weights: Vec<f64>,
    pub embedding: KernelEmbedding,
}

impl QuadratureRule {
    /// `sum_n w_n f_n`.
    pub fn apply(&self, fvals: &[f64]) -> Result<f64> {
        if fvals.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "{} function values for a {}-node rule",
                fvals.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(fvals).map(|(w, f)| w * f).sum())
    }

    /// Worst-case error squared `initial - 2 w^T mu + w^T K w`.
    pub fn squared_worst_case_error(&self) -> Result<f64> {
        let mu = self.embedding.kme_vector(&self.nodes)?;
        let k = gram(self.embedding.kernel(), &self.nodes)?.into_inner();
        let w = DVector::from_column_slice(&self.weights);
        let quad = w.dot(&(&k * &w));
        let lin: f64 = w.iter().zip(&mu).map(|(a, b)| a * b).sum();
        Ok(self.embedding.initial_error() - 2.0 * lin + quad)
    }
}

/// Bayesian quadrature posterior on the integral.
#[derive(Debug, Clone)]
pub struct BqPosterior {
    pub mean: f64,
    pub variance: f64,
    pub rule: QuadratureRule,
}

/// BQ posterior mean and variance with optional nugget `lambda_x` added to
/// the Gram diagonal.
pub fn bq_posterior(
    emb: &KernelEmbedding,
    nodes: &Points,
    fvals: &[f64],
    lambda_x: f64,
    policy: &JitterPolicy,
) -> Result<BqPosterior> {
    if nodes.is_empty() {
        return Err(Error::Empty("BQ needs at least one node".into()));
    }
    if fvals.len() != nodes.len() {
        return Err(Error::Shape(format!(
            "{} function values for {} nodes",
            fvals.len(),
            nodes.len()
        )));
    }
    if !(lambda_x >= 0.0) {
        return Err(Error::InvalidParameter(format!("nugget must be non-negative, got {lambda_x}")));
    }
    let mut k = gram(emb.kernel(), nodes)?.into_inner();
    for i in 0..nodes.len() {
        k[(i, i)] += lambda_x;
    }
    let factor = cholesky_with_jitter(&k, policy)?;
    let mu = DVector::from_vec(emb.kme_vector(nodes)?);
    let weights = factor.solve(&mu);
    let mean = weights.iter().zip(fvals).map(|(w, f)| w * f).sum();
    let init = emb.initial_error();
    let reduction = factor.solve_lower(&mu).norm_squared();
    let variance = clamp_variance(init - reduction, init)?;
    Ok(BqPosterior {
        mean,
        variance,
        rule: QuadratureRule {
            nodes: nodes.clone(),
            weights: weights.as_slice().to_vec(),
            embedding: emb.clone(),
        },
    })
}

/// Optimal weights `c(u, u)^{-1} mu_c(u)` for the base-space embedding.
pub fn ow_weights(emb: &KernelEmbedding, nodes: &Points, policy: &JitterPolicy) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Err(Error::Empty("optimal weights need at least one node".into()));
    }
    let k = gram(emb.kernel(), nodes)?.into_inner();
    let factor = cholesky_with_jitter(&k, policy).map_err(|e| {
        e.context("optimal weights: Gram matrix of the base nodes is singular; add jitter or remove duplicate nodes")
    })?;
    let mu = DVector::from_vec(emb.kme_vector(nodes)?);
    Ok(factor.solve(&mu).as_slice().to_vec())
}

/// MMD squared between the pushforward `sum w*_n delta_{G(u_n)}` and `q`.
pub fn ow_mmd2<G>(
    kernel_k: &KernelSpec,
    emb_c: &KernelEmbedding,
    generator: G,
    base_nodes: &Points,
    q: &EmpiricalMeasure,
    policy: &JitterPolicy,
) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let rows: Vec<Vec<f64>> = base_nodes.rows().map(&generator).collect();
    let x = Points::from_rows(&rows)?;
    let w = ow_weights(emb_c, base_nodes, policy)?;
    mmd2_weighted(kernel_k, &EmpiricalMeasure::weighted(x, w)?, q)
}
