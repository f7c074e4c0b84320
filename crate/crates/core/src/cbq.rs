//! Conditional Bayesian quadrature for parametric expectations
//! `I(theta) = E_{X ~ P_theta}[f(X, theta)]`, with least-squares Monte Carlo
//! baselines.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bq::{bq_posterior, KernelEmbedding, Measure};
use crate::error::{Error, Result};
use crate::gp::{Dataset, GpPosterior};
use crate::kernels::{kernel_vector, KernelSpec};
use crate::linalg::{cholesky_with_jitter, JitterPolicy};
use crate::points::Points;

/// Samples and integrand values at `T` parameter values.
#[derive(Debug, Clone)]
pub struct ConditionalTask {
    pub thetas: Points,
    pub samples: Vec<Points>,
    pub fvals: Vec<Vec<f64>>,
    /// `P_theta` at each `theta_t`.
    pub measures: Vec<Measure>,
    pub kernel_x: KernelSpec,
    pub kernel_theta: KernelSpec,
}

impl ConditionalTask {
    /// Builds a task, evaluating `measure_at` at every parameter value.
    pub fn new(
        thetas: Points,
        samples: Vec<Points>,
        fvals: Vec<Vec<f64>>,
        measure_at: impl Fn(&[f64]) -> Result<Measure>,
        kernel_x: KernelSpec,
        kernel_theta: KernelSpec,
    ) -> Result<Self> {
        let measures = thetas.rows().map(measure_at).collect::<Result<Vec<_>>>()?;
        let task = Self {
            thetas,
            samples,
            fvals,
            measures,
            kernel_x,
            kernel_theta,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.thetas.len();
        if t == 0 {
            return Err(Error::Empty("task needs at least one parameter value".into()));
        }
        if self.samples.len() != t || self.fvals.len() != t || self.measures.len() != t {
            return Err(Error::Shape(format!(
                "{t} parameters but {} sample sets, {} value sets and {} measures",
                self.samples.len(),
                self.fvals.len(),
                self.measures.len()
            )));
        }
        let n = self.samples[0].len();
        if n == 0 {
            return Err(Error::Empty("task needs at least one sample per parameter".into()));
        }
        for (i, (x, f)) in self.samples.iter().zip(&self.fvals).enumerate() {
            if x.len() != n || f.len() != n {
                return Err(Error::Shape(format!(
                    "parameter {i} has {} samples and {} values, expected {n}",
                    x.len(),
                    f.len()
                )));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.thetas.len()
    }

    pub fn samples_per_param(&self) -> usize {
        self.samples[0].len()
    }

    pub fn with_kernels(&self, kernel_x: KernelSpec, kernel_theta: KernelSpec) -> Self {
        Self {
            kernel_x,
            kernel_theta,
            ..self.clone()
        }
    }

    /// Plain Monte Carlo means `(1/N) sum_n f(x_n^t, theta_t)`.
    pub fn mc_means(&self) -> Vec<f64> {
        self.fvals
            .iter()
            .map(|f| f.iter().sum::<f64>() / f.len() as f64)
            .collect()
    }

    /// Empirical mean and standard deviation over all integrand values.
    pub fn standardization(&self) -> Standardization {
        // sorted so the result does not depend on parameter order
        let mut all: Vec<f64> = self.fvals.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Standardization { mean, scale }
    }
}

/// Affine map to and from standardized integrand values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Self { mean: 0.0, scale: 1.0 }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        self.mean + self.scale * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbqOptions {
    pub lambda_theta: f64,
    pub lambda_x: f64,
    /// Standardize integrand values before both stages.
    pub standardize: bool,
    pub policy: JitterPolicy,
}

impl Default for CbqOptions {
    fn default() -> Self {
        Self {
            lambda_theta: 0.0,
            lambda_x: 0.0,
            standardize: true,
            policy: JitterPolicy::default(),
        }
    }
}

impl CbqOptions {
    pub fn with_lambda_theta(mut self, lambda_theta: f64) -> Self {
        self.lambda_theta = lambda_theta;
        self
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }
}

/// Per-parameter BQ output in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    pub mean: f64,
    pub variance: f64,
    /// BQ weights `v^t`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CbqPosterior {
    pub stage1: Vec<Stage1>,
    pub stage2: GpPosterior,
    pub lambda_theta: f64,
    pub standardization: Standardization,
}

/// Posterior mean and variance at a query, plus the quadrature form of the
/// mean: `mean = offset + sum_t sum_n weights[t * N + n] f(x_n^t, theta_t)`.
/// The offset is zero without standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct CbqPrediction {
    pub mean: f64,
    pub variance: f64,
    pub weights: Vec<f64>,
    pub offset: f64,
}

/// BQ at every parameter value, run in parallel.
pub fn stage1(task: &ConditionalTask, std: &Standardization, opts: &CbqOptions) -> Result<Vec<Stage1>> {
    task.validate()?;
    (0..task.num_params())
        .into_par_iter()
        .map(|t| {
            let emb = KernelEmbedding::new(task.kernel_x, task.measures[t].clone())?;
            let f: Vec<f64> = task.fvals[t].iter().map(|&v| std.forward(v)).collect();
            let bq = bq_posterior(&emb, &task.samples[t], &f, opts.lambda_x, &opts.policy)?;
            Ok(Stage1 {
                mean: bq.mean,
                variance: bq.variance,
                weights: bq.rule.weights,
            })
        })
        .enumerate()
        .map(|(t, r): (usize, Result<Stage1>)| r.map_err(|e| e.context(format!("stage 1, parameter {t}"))))
        .collect()
}

fn stage2(
    task: &ConditionalTask,
    stage1: &[Stage1],
    kernel_theta: &KernelSpec,
    lambda_theta: f64,
    policy: &JitterPolicy,
) -> Result<GpPosterior> {
    if !(lambda_theta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nugget must be non-negative, got {lambda_theta}"
        )));
    }
    let data = Dataset::new(
        task.thetas.clone(),
        stage1.iter().map(|s| s.mean).collect(),
        stage1.iter().map(|s| lambda_theta + s.variance).collect(),
    )?;
    GpPosterior::fit(kernel_theta, data, policy).map_err(|e| e.context("stage 2"))
}

/// Two-stage fit: BQ per parameter, then heteroscedastic GP regression over
/// parameters with noise `lambda_theta + sigma^2_BQ(theta_t)`.
pub fn cbq_fit(task: &ConditionalTask, opts: &CbqOptions) -> Result<CbqPosterior> {
    let standardization = if opts.standardize {
        task.standardization()
    } else {
        Standardization::identity()
    };
    let s1 = stage1(task, &standardization, opts)?;
    let s2 = stage2(task, &s1, &task.kernel_theta, opts.lambda_theta, &opts.policy)?;
    Ok(CbqPosterior {
        stage1: s1,
        stage2: s2,
        lambda_theta: opts.lambda_theta,
        standardization,
    })
}

pub fn cbq_predict(post: &CbqPosterior, theta: &[f64]) -> Result<CbqPrediction> {
    let gp = &post.stage2;
    let std = post.standardization;
    let k = kernel_vector(gp.spec(), theta, &gp.train().inputs)?;
    let w = gp.solve(&k)?;
    let mean_std: f64 = w.iter().zip(&post.stage1).map(|(w, s)| w * s.mean).sum();
    let variance = std.scale * std.scale * gp.predict_var(theta)?;
    let mut weights = Vec::with_capacity(post.stage1.len() * post.stage1[0].weights.len());
    for (wt, s) in w.iter().zip(&post.stage1) {
        weights.extend(s.weights.iter().map(|v| wt * v));
    }
    // undo standardization: mean + scale * sum w v (f - mean) / scale
    let offset = std.mean * (1.0 - weights.iter().sum::<f64>());
    Ok(CbqPrediction {
        mean: std.inverse(mean_std),
        variance,
        weights,
        offset,
    })
}

impl CbqPrediction {
    /// Evaluates the quadrature form on the task's integrand values.
    pub fn quadrature_value(&self, task: &ConditionalTask) -> f64 {
        self.offset
            + self
                .weights
                .iter()
                .zip(task.fvals.iter().flatten())
                .map(|(w, f)| w * f)
                .sum::<f64>()
    }
}

/// Hyperparameter grid shared by both stages.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub amplitudes: Vec<f64>,
    pub lengthscales: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl HyperGrid {
    pub fn standard() -> Self {
        Self {
            amplitudes: vec![1.0, 10.0, 100.0, 1000.0],
            lengthscales: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            lambdas: vec![0.01, 0.1, 1.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() || self.lengthscales.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Empty("hyperparameter grid has an empty axis".into()));
        }
        Ok(())
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub amplitude: f64,
    pub lengthscale: f64,
    pub lambda: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperSelection {
    pub kernel_x: KernelSpec,
    pub kernel_theta: KernelSpec,
    pub lambda_theta: f64,
    /// Stage 1 grid (lambda is the fixed `lambda_x`), in grid order.
    pub stage1_grid: Vec<GridPoint>,
    /// Stage 2 grid, in grid order.
    pub stage2_grid: Vec<GridPoint>,
}

fn argmax(grid: &[GridPoint]) -> Result<GridPoint> {
    grid.iter()
        .filter(|g| g.log_likelihood.is_finite())
        .fold(None, |best: Option<GridPoint>, g| match best {
            Some(b) if b.log_likelihood >= g.log_likelihood => Some(b),
            _ => Some(*g),
        })
        .ok_or_else(|| Error::Singular {
            jitter: f64::NAN,
            condition: f64::INFINITY,
        })
}

/// Grid-search empirical Bayes. Stage 1 kernel amplitude and lengthscale
/// maximise the marginal likelihood of the first parameter's standardized
/// values and are reused for every parameter. Stage 2 amplitude,
/// lengthscale and nugget then maximise the heteroscedastic likelihood.
pub fn empirical_bayes_grid(
    task: &ConditionalTask,
    grid: &HyperGrid,
    opts: &CbqOptions,
) -> Result<HyperSelection> {
    task.validate()?;
    grid.validate()?;
    let std = if opts.standardize {
        task.standardization()
    } else {
        Standardization::identity()
    };
    let f1: Vec<f64> = task.fvals[0].iter().map(|&v| std.forward(v)).collect();
    let data1 = Dataset::homoscedastic(task.samples[0].clone(), f1, opts.lambda_x)?;
    let mut stage1_grid = Vec::new();
    for &a in &grid.amplitudes {
        for &l in &grid.lengthscales {
            let spec = task.kernel_x.with_amplitude(a)?.with_lengthscale(l)?;
            let ll = GpPosterior::fit(&spec, data1.clone(), &opts.policy)
                .map(|p| p.log_marginal_likelihood())
                .unwrap_or(f64::NEG_INFINITY);
            stage1_grid.push(GridPoint {
                amplitude: a,
                lengthscale: l,
                lambda: opts.lambda_x,
                log_likelihood: ll,
            });
        }
    }
    let best1 = argmax(&stage1_grid).map_err(|e| e.context("stage 1 grid"))?;
    let kernel_x = task.kernel_x.with_amplitude(best1.amplitude)?.with_lengthscale(best1.lengthscale)?;
    let with_x = task.with_kernels(kernel_x, task.kernel_theta);
    let s1 = stage1(&with_x, &std, opts)?;

    let mut stage2_grid = Vec::new();
    for &a in &grid.amplitudes {
        for &l in &grid.lengthscales {
            for &lam in &grid.lambdas {
                let spec = task.kernel_theta.with_amplitude(a)?.with_lengthscale(l)?;
                let ll = stage2(&with_x, &s1, &spec, lam, &opts.policy)
                    .map(|p| p.log_marginal_likelihood())
                    .unwrap_or(f64::NEG_INFINITY);
                stage2_grid.push(GridPoint {
                    amplitude: a,
                    lengthscale: l,
                    lambda: lam,
                    log_likelihood: ll,
                });
            }
        }
    }
    let best2 = argmax(&stage2_grid).map_err(|e| e.context("stage 2 grid"))?;
    Ok(HyperSelection {
        kernel_x,
        kernel_theta: task.kernel_theta.with_amplitude(best2.amplitude)?.with_lengthscale(best2.lengthscale)?,
        lambda_theta: best2.lambda,
        stage1_grid,
        stage2_grid,
    })
}

/// Exponents of all monomials of total degree at most `degree` in `dim`
/// variables, in graded lexicographic order.
pub fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        rec(dim, total, &mut Vec::new(), &mut out);
    }
    out
}

/// Least-squares polynomial regression over parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    pub degree: usize,
    pub exponents: Vec<Vec<usize>>,
    pub coeffs: Vec<f64>,
}

impl PolynomialModel {
    fn features(exponents: &[Vec<usize>], theta: &[f64]) -> Vec<f64> {
        exponents
            .iter()
            .map(|e| e.iter().zip(theta).map(|(&p, &x)| x.powi(p as i32)).product())
            .collect()
    }

    pub fn predict(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.exponents[0].len() {
            return Err(Error::Shape(format!(
                "query has dimension {}, model expects {}",
                theta.len(),
                self.exponents[0].len()
            )));
        }
        Ok(Self::features(&self.exponents, theta)
            .iter()
            .zip(&self.coeffs)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// Relative singular-value cutoff below which the design counts as rank
/// deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Fits a total-degree-`degree` polynomial to `targets` by least squares.
pub fn lsmc_fit(thetas: &Points, targets: &[f64], degree: usize) -> Result<PolynomialModel> {
    if thetas.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} parameters and {} targets",
            thetas.len(),
            targets.len()
        )));
    }
    if thetas.is_empty() {
        return Err(Error::Empty("LSMC needs data".into()));
    }
    let exponents = monomial_exponents(thetas.dim(), degree);
    let (t, m) = (thetas.len(), exponents.len());
    if t <= m {
        return Err(Error::InvalidParameter(format!(
            "degree {degree} has {m} monomials, needs more than {m} parameters, got {t}"
        )));
    }
    let design = DMatrix::from_fn(t, m, |i, j| {
        exponents[j].iter().zip(thetas.row(i)).map(|(&p, &x)| x.powi(p as i32)).product()
    });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(Error::Singular {
            jitter: 0.0,
            condition: smax / smin,
        }
        .context("rank-deficient polynomial design"));
    }
    let coeffs = svd
        .solve(&DVector::from_column_slice(targets), 0.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(PolynomialModel {
        degree,
        exponents,
        coeffs: coeffs.as_slice().to_vec(),
    })
}

/// Kernel ridge regression `k(theta, thetas)^T (K + ridge I)^{-1} y`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeModel {
    pub thetas: Points,
    pub kernel: KernelSpec,
    pub ridge: f64,
    pub coeffs: Vec<f64>,
}

impl KernelRidgeModel {
    pub fn predict(&self, theta: &[f64]) -> Result<f64> {
        let k = kernel_vector(&self.kernel, theta, &self.thetas)?;
        Ok(k.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum())
    }
}

/// Kernel ridge fit. No jitter is added, so `ridge = 0` with a singular Gram
/// matrix is an error.
pub fn klsmc_fit(thetas: &Points, targets: &[f64], kernel: &KernelSpec, ridge: f64) -> Result<KernelRidgeModel> {
    if thetas.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} parameters and {} targets",
            thetas.len(),
            targets.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be non-negative, got {ridge}")));
    }
    let mut k = crate::kernels::gram(kernel, thetas)?.into_inner();
    for i in 0..thetas.len() {
        k[(i, i)] += ridge;
    }
    let factor = cholesky_with_jitter(&k, &JitterPolicy::none())?;
    let coeffs = factor.solve(&DVector::from_column_slice(targets));
    Ok(KernelRidgeModel {
        thetas: thetas.clone(),
        kernel: *kernel,
        ridge,
        coeffs: coeffs.as_slice().to_vec(),
    })
}
