//! Kernel quantile discrepancies from directional order statistics.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{median_of, KernelSpec};
use crate::mmd::{mmd2_u_paired, EmpiricalMeasure};
use crate::points::Points;
use crate::rng::RngStream;

/// Redraws allowed for a direction whose RKHS norm vanishes.
pub const MAX_DIRECTION_REDRAWS: usize = 100;

/// Norms at or below this are treated as degenerate.
const DEGENERATE_NORM: f64 = 1e-12;

/// Unit-norm RKHS function `u = f / ||f||` with
/// `f = M^{-1/2} sum_m lambda_m k(z_m, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDirection {
    kernel: KernelSpec,
    anchors: Points,
    coeffs: Vec<f64>,
    norm: f64,
    /// Coefficients on an explicit feature map, when the kernel has one.
    features: Option<Vec<f64>>,
}

impl ProjectionDirection {
    /// Builds the direction, failing if `||f||` is degenerate.
    pub fn new(kernel: KernelSpec, anchors: Points, coeffs: Vec<f64>) -> Result<Self> {
        if anchors.is_empty() || anchors.len() != coeffs.len() {
            return Err(Error::Shape(format!(
                "{} anchors and {} coefficients",
                anchors.len(),
                coeffs.len()
            )));
        }
        kernel.check_points(&anchors)?;
        let m = anchors.len();
        let mut quad = 0.0;
        for i in 0..m {
            for j in 0..m {
                quad += coeffs[i] * coeffs[j] * kernel.eval_unchecked(anchors.row(i), anchors.row(j));
            }
        }
        let norm = (quad.max(0.0) / m as f64).sqrt();
        if !(norm > DEGENERATE_NORM) {
            return Err(Error::DegenerateDirection(0));
        }
        let features = if kernel.has_feature_map(anchors.dim()) {
            let scale = 1.0 / (norm * (m as f64).sqrt());
            let mut beta: Vec<f64> = Vec::new();
            for (z, c) in anchors.rows().zip(&coeffs) {
                let phi = kernel.feature_map(z).expect("feature map available");
                if beta.is_empty() {
                    beta = vec![0.0; phi.len()];
                }
                for (b, p) in beta.iter_mut().zip(phi) {
                    *b += scale * c * p;
                }
            }
            Some(beta)
        } else {
            None
        };
        Ok(Self {
            kernel,
            anchors,
            coeffs,
            norm,
            features,
        })
    }

    pub fn anchors(&self) -> &Points {
        &self.anchors
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `||f||_H` before normalization.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// `||u||_H^2` recomputed from the representation; 1 up to rounding.
    pub fn unit_norm_squared(&self) -> f64 {
        let m = self.anchors.len();
        let mut quad = 0.0;
        for i in 0..m {
            for j in 0..m {
                quad += self.coeffs[i]
                    * self.coeffs[j]
                    * self.kernel.eval_unchecked(self.anchors.row(i), self.anchors.row(j));
            }
        }
        quad / (m as f64 * self.norm * self.norm)
    }

    /// `u(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(beta) = &self.features {
            let phi = self.kernel.feature_map(x).expect("feature map available");
            return beta.iter().zip(phi).map(|(b, p)| b * p).sum();
        }
        let m = self.anchors.len();
        let s: f64 = self
            .anchors
            .rows()
            .zip(&self.coeffs)
            .map(|(z, c)| c * self.kernel.eval_unchecked(z, x))
            .sum();
        s / (self.norm * (m as f64).sqrt())
    }

    /// `u` at every row of `points`.
    pub fn project(&self, points: &Points) -> Result<Vec<f64>> {
        if points.dim() != self.anchors.dim() {
            return Err(Error::Shape(format!(
                "projecting {}-d points on a {}-d direction",
                points.dim(),
                self.anchors.dim()
            )));
        }
        self.kernel.check_points(points)?;
        Ok(points.rows().map(|x| self.eval(x)).collect())
    }
}

/// Density of the weighting measure on quantile levels.
#[derive(Clone, Default)]
pub enum QuantileWeighting {
    #[default]
    Uniform,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl QuantileWeighting {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        QuantileWeighting::Custom(Arc::new(f))
    }

    pub fn density(&self, alpha: f64) -> f64 {
        match self {
            QuantileWeighting::Uniform => 1.0,
            QuantileWeighting::Custom(f) => f(alpha),
        }
    }
}

impl fmt::Debug for QuantileWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantileWeighting::Uniform => f.write_str("Uniform"),
            QuantileWeighting::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Where direction anchors are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceRule {
    /// With replacement from the pooled sample.
    #[default]
    Pooled,
    /// `N(median, (IQR / 1.349)^2)` per coordinate of the pooled sample.
    StandardGaussianIqr,
    /// Uniform on `median +- IQR` per coordinate of the pooled sample.
    UniformCubeIqr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KqdConfig {
    pub p: u32,
    pub l: usize,
    pub m: usize,
    pub seed: u64,
    pub reference: ReferenceRule,
}

impl KqdConfig {
    pub fn new(p: u32, l: usize, m: usize, seed: u64) -> Self {
        Self {
            p,
            l,
            m,
            seed,
            reference: ReferenceRule::Pooled,
        }
    }

    /// `L = M = ceil(log N)`, at least 1.
    pub fn log_scaled(p: u32, n: usize, seed: u64) -> Self {
        let k = ((n.max(2) as f64).ln().ceil() as usize).max(1);
        Self::new(p, k, k, seed)
    }

    pub fn with_reference(mut self, reference: ReferenceRule) -> Self {
        self.reference = reference;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if self.l < 1 || self.m < 1 {
            return Err(Error::InvalidParameter(format!(
                "direction and anchor counts must be positive, got L={} M={}",
                self.l, self.m
            )));
        }
        Ok(())
    }
}

fn column_quartiles(points: &Points, k: usize) -> (f64, f64, f64) {
    let mut col: Vec<f64> = points.rows().map(|r| r[k]).collect();
    col.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (col.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        col[lo] + (pos - lo as f64) * (col[hi] - col[lo])
    };
    let med = median_of(&mut col.clone());
    (q(0.25), med, q(0.75))
}

fn draw_anchors(pooled: &Points, rule: ReferenceRule, m: usize, rng: &mut RngStream) -> Result<Points> {
    match rule {
        ReferenceRule::Pooled => {
            let idx: Vec<usize> = (0..m).map(|_| rng.next_index(pooled.len())).collect();
            Ok(pooled.select(&idx))
        }
        ReferenceRule::StandardGaussianIqr | ReferenceRule::UniformCubeIqr => {
            let d = pooled.dim();
            let stats: Vec<(f64, f64, f64)> = (0..d).map(|k| column_quartiles(pooled, k)).collect();
            let mut data = Vec::with_capacity(m * d);
            for _ in 0..m {
                for &(q1, med, q3) in &stats {
                    let iqr = q3 - q1;
                    data.push(match rule {
                        ReferenceRule::StandardGaussianIqr => med + iqr / 1.349 * rng.next_normal(),
                        _ => med + iqr * (2.0 * rng.next_uniform() - 1.0),
                    });
                }
            }
            Points::new(data, d)
        }
    }
}

/// `L` directions drawn from the Gaussian measure induced by the reference.
///
/// Direction `l` uses its own stream split from the config seed, so the set
/// does not depend on how the work is scheduled.
pub fn sample_directions(spec: &KernelSpec, cfg: &KqdConfig, pooled: &Points) -> Result<Vec<ProjectionDirection>> {
    cfg.validate()?;
    if pooled.is_empty() {
        return Err(Error::Empty("direction sampling needs a non-empty pooled sample".into()));
    }
    spec.check_points(pooled)?;
    let base = RngStream::new(cfg.seed).split("kqd-directions");
    (0..cfg.l)
        .map(|l| {
            let mut rng = base.split_indexed("direction", l);
            let anchors = draw_anchors(pooled, cfg.reference, cfg.m, &mut rng)?;
            spec.check_points(&anchors)?;
            for _ in 0..MAX_DIRECTION_REDRAWS {
                let coeffs = rng.normal(cfg.m);
                match ProjectionDirection::new(*spec, anchors.clone(), coeffs) {
                    Ok(dir) => return Ok(dir),
                    Err(Error::DegenerateDirection(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::DegenerateDirection(MAX_DIRECTION_REDRAWS))
        })
        .collect()
}

/// The `ceil(alpha N)`-th smallest projected value.
pub fn directional_quantile(u: &ProjectionDirection, sample: &Points, alpha: f64) -> Result<f64> {
    let mut vals = u.project(sample)?;
    order_statistic(&mut vals, alpha)
}

/// `ceil(alpha N)`-th smallest entry, index clamped to `1..=N`.
pub fn order_statistic(values: &mut [f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of an empty sample".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1], got {alpha}")));
    }
    let n = values.len();
    let k = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    values.sort_unstable_by(f64::total_cmp);
    Ok(values[k - 1])
}

/// `(1/N) sum_n |x_(n) - y_(n)|^p f_nu(n/N)` for one direction; sorts in place.
pub fn direction_term(ux: &mut [f64], uy: &mut [f64], p: u32, nu: &QuantileWeighting) -> f64 {
    ux.sort_unstable_by(f64::total_cmp);
    uy.sort_unstable_by(f64::total_cmp);
    let n = ux.len() as f64;
    let mut acc = 0.0;
    for (i, (a, b)) in ux.iter().zip(uy.iter()).enumerate() {
        let d = (a - b).abs();
        let dp = if p == 1 { d } else if p == 2 { d * d } else { d.powi(p as i32) };
        acc += match nu {
            QuantileWeighting::Uniform => dp,
            w => dp * w.density((i + 1) as f64 / n),
        };
    }
    acc / n
}

fn check_equal(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("KQD needs non-empty samples".into()));
    }
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "KQD pairs order statistics and needs equal sizes, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!("samples have dimensions {} and {}", p.dim(), q.dim())));
    }
    Ok(())
}

/// Per-direction terms and mean differences for a fixed direction set.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionTerms {
    pub terms: Vec<f64>,
    pub mean_gaps: Vec<f64>,
}

impl DirectionTerms {
    pub fn ekqd(&self) -> f64 {
        self.terms.iter().sum::<f64>() / self.terms.len() as f64
    }

    pub fn supkqd(&self) -> f64 {
        self.terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(1/L) sum_l (mean u_l(x) - mean u_l(y))^2`.
    pub fn mean_gap_sq(&self) -> f64 {
        self.mean_gaps.iter().map(|g| g * g).sum::<f64>() / self.mean_gaps.len() as f64
    }
}

/// Evaluates every direction on both samples. Directions run in parallel and
/// results are kept in direction order.
pub fn direction_terms(
    dirs: &[ProjectionDirection],
    x: &Points,
    y: &Points,
    p: u32,
    nu: &QuantileWeighting,
) -> Result<DirectionTerms> {
    if dirs.is_empty() {
        return Err(Error::Empty("no projection directions".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("equal sample sizes needed, got {} and {}", x.len(), y.len())));
    }
    let per: Vec<Result<(f64, f64)>> = dirs
        .par_iter()
        .map(|u| {
            let mut ux = u.project(x)?;
            let mut uy = u.project(y)?;
            let n = ux.len() as f64;
            let gap = ux.iter().sum::<f64>() / n - uy.iter().sum::<f64>() / n;
            Ok((direction_term(&mut ux, &mut uy, p, nu), gap))
        })
        .collect();
    let mut terms = Vec::with_capacity(dirs.len());
    let mut mean_gaps = Vec::with_capacity(dirs.len());
    for r in per {
        let (t, g) = r?;
        terms.push(t);
        mean_gaps.push(g);
    }
    Ok(DirectionTerms { terms, mean_gaps })
}

fn pooled(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<Points> {
    p.points().concat(q.points())
}

/// Monte Carlo e-KQD to the power `p`, directions drawn from the pooled sample.
pub fn ekqd_p(
    spec: &KernelSpec,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    cfg: &KqdConfig,
    nu: &QuantileWeighting,
) -> Result<f64> {
    check_equal(p, q)?;
    let dirs = sample_directions(spec, cfg, &pooled(p, q)?)?;
    Ok(direction_terms(&dirs, p.points(), q.points(), cfg.p, nu)?.ekqd())
}

/// Largest per-direction term over the sampled directions.
pub fn supkqd_p(
    spec: &KernelSpec,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    cfg: &KqdConfig,
    nu: &QuantileWeighting,
) -> Result<f64> {
    check_equal(p, q)?;
    let dirs = sample_directions(spec, cfg, &pooled(p, q)?)?;
    Ok(direction_terms(&dirs, p.points(), q.points(), cfg.p, nu)?.supkqd())
}

/// Centered e-KQD: `ekqd_2 + MMD^2 - mean_l (E_P u_l - E_Q u_l)^2`, with the
/// equal-size U-statistic [`mmd2_u_paired`] as the MMD term. Can be slightly
/// negative because that term is unbiased.
pub fn ekqd_centered(
    spec: &KernelSpec,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    cfg: &KqdConfig,
    nu: &QuantileWeighting,
) -> Result<f64> {
    if cfg.p != 2 {
        return Err(Error::InvalidParameter(format!("centered e-KQD is defined for p = 2, got p = {}", cfg.p)));
    }
    check_equal(p, q)?;
    let dirs = sample_directions(spec, cfg, &pooled(p, q)?)?;
    let t = direction_terms(&dirs, p.points(), q.points(), 2, nu)?;
    Ok(t.ekqd() + mmd2_u_paired(spec, p, q)? - t.mean_gap_sq())
}

/// Distance scale `value^(1/p)` of a p-th power discrepancy.
pub fn kqd_root(value: f64, p: u32) -> f64 {
    value.max(0.0).powf(1.0 / p as f64)
}
