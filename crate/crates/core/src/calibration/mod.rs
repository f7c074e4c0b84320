//! Closed-form amplitude estimators for the Brownian-motion kernel.
//!
//! All formulas take `x_0 = 0` and `f_0 = 0`, which is where a Brownian
//! prior is pinned.

mod experiments;
mod paths;

pub use experiments::{
    bm_bq_estimate, calib_ratio_bq, rate_experiment, rate_slope, ratio_from_replicates, CalibRatios,
    RateRecord,
};
pub use paths::{sample_path, PathSamplerSpec, Process, SamplingMethod, MAX_CHOLESKY_POINTS};

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Strictly increasing nodes `0 < x_1 < ... < x_N <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    t: f64,
    points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>, t: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("partition needs at least one node".into()));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("interval end must be positive, got {t}")));
        }
        if !(points[0] > 0.0) {
            return Err(Error::Domain(format!("first node must be positive, got {}", points[0])));
        }
        if let Some(w) = points.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::Domain(format!(
                "nodes must be strictly increasing; x[{w}] = {} >= x[{}] = {}",
                points[w],
                w + 1,
                points[w + 1]
            )));
        }
        let last = *points.last().unwrap();
        if last > t {
            return Err(Error::Domain(format!("last node {last} exceeds the interval end {t}")));
        }
        Ok(Self { t, points })
    }

    /// Equally spaced nodes `x_n = n T / N`, `n = 1..N`.
    pub fn uniform(n: usize, t: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("partition needs at least one node".into()));
        }
        let mut points: Vec<f64> = (1..=n).map(|i| i as f64 * t / n as f64).collect();
        points[n - 1] = t;
        Self::new(points, t)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node `n` with the convention `x_0 = 0`.
    fn x(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.points[n - 1]
        }
    }

    /// Spacings `x_n - x_{n-1}` for `n = 1..N`.
    pub fn spacings(&self) -> Vec<f64> {
        (1..=self.len()).map(|n| self.x(n) - self.x(n - 1)).collect()
    }

    /// Equally spaced up to rounding.
    pub fn is_uniform(&self) -> bool {
        let h = self.t / self.len() as f64;
        (self.x(self.len()) - self.t).abs() <= 1e-12 * self.t
            && self.spacings().iter().all(|d| (d - h).abs() <= 1e-9 * h)
    }

    fn check_values(&self, fvals: &[f64]) -> Result<()> {
        if fvals.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} function values for a partition of {} nodes",
                fvals.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

fn f_at(fvals: &[f64], n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        fvals[n - 1]
    }
}

/// Piecewise-linear interpolant through `(0, 0)` and the data, constant
/// after the last node.
pub fn bm_posterior_mean(part: &Partition, fvals: &[f64], x: f64) -> Result<f64> {
    part.check_values(fvals)?;
    if !(0.0..=part.t).contains(&x) {
        return Err(Error::Domain(format!("query {x} outside [0, {}]", part.t)));
    }
    let n = part.len();
    if x >= part.x(n) {
        return Ok(fvals[n - 1]);
    }
    // first node >= x
    let k = part.points.partition_point(|&p| p < x) + 1;
    let (a, b) = (part.x(k - 1), part.x(k));
    let (fa, fb) = (f_at(fvals, k - 1), f_at(fvals, k));
    Ok(fa + (fb - fa) * (x - a) / (b - a))
}

/// Posterior covariance of unit-amplitude Brownian motion given the nodes.
pub fn bm_posterior_cov(part: &Partition, x: f64, y: f64) -> Result<f64> {
    for v in [x, y] {
        if !(0.0..=part.t).contains(&v) {
            return Err(Error::Domain(format!("query {v} outside [0, {}]", part.t)));
        }
    }
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let n = part.len();
    let last = part.x(n);
    if lo >= last {
        return Ok(lo - last);
    }
    let cell = |v: f64| part.points.partition_point(|&p| p < v);
    let (c_lo, c_hi) = (cell(lo), cell(hi));
    if c_lo != c_hi || hi > last {
        return Ok(0.0);
    }
    let (a, b) = (part.x(c_lo), part.x(c_lo + 1));
    Ok((b - hi) * (lo - a) / (b - a))
}

/// Symmetric tridiagonal matrix stored by diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
        }
        m
    }

    /// Quadratic form `y^T A y`.
    pub fn quadratic_form(&self, y: &[f64]) -> f64 {
        let mut acc: f64 = self.diag.iter().zip(y).map(|(d, v)| d * v * v).sum();
        for i in 0..self.off.len() {
            acc += 2.0 * self.off[i] * y[i] * y[i + 1];
        }
        acc
    }
}

/// Inverse of the unit-amplitude Brownian Gram matrix `[min(x_i, x_j)]`.
pub fn bm_gram_inverse(part: &Partition) -> Tridiagonal {
    let n = part.len();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for i in 1..=n {
        let left = part.x(i) - part.x(i - 1);
        diag[i - 1] = if i < n {
            let right = part.x(i + 1) - part.x(i);
            (part.x(i + 1) - part.x(i - 1)) / (left * right)
        } else {
            1.0 / left
        };
        if i < n {
            off[i - 1] = -1.0 / (part.x(i + 1) - part.x(i));
        }
    }
    Tridiagonal { diag, off }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScaleEstimator {
    Cv,
    Ml,
    Icv,
}

impl ScaleEstimator {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CV" => Ok(ScaleEstimator::Cv),
            "ML" => Ok(ScaleEstimator::Ml),
            "ICV" => Ok(ScaleEstimator::Icv),
            other => Err(Error::InvalidParameter(format!("unknown estimator '{other}'"))),
        }
    }

    pub fn estimate(self, part: &Partition, fvals: &[f64]) -> Result<ScaleEstimate> {
        match self {
            ScaleEstimator::Cv => cv_estimate(part, fvals),
            ScaleEstimator::Ml => ml_estimate(part, fvals),
            ScaleEstimator::Icv => icv_estimate(part, fvals),
        }
    }
}

impl fmt::Display for ScaleEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleEstimator::Cv => "CV",
            ScaleEstimator::Ml => "ML",
            ScaleEstimator::Icv => "ICV",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub value: f64,
    pub estimator: ScaleEstimator,
    pub n: usize,
}

/// The three sums making up `N` times the CV estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvTerms {
    pub b1: f64,
    pub interior: f64,
    pub b2: f64,
}

pub fn cv_terms(part: &Partition, fvals: &[f64]) -> Result<CvTerms> {
    part.check_values(fvals)?;
    let n = part.len();
    if n < 3 {
        return Err(Error::Empty(format!("CV and ICV need at least three nodes, got {n}")));
    }
    let x = |i: usize| part.x(i);
    let f = |i: usize| f_at(fvals, i);
    let (x1, x2) = (x(1), x(2));
    let b1 = (x2 * f(1) - x1 * f(2)).powi(2) / (x1 * x2 * (x2 - x1));
    let mut interior = 0.0;
    for k in 2..n {
        let dl = x(k) - x(k - 1);
        let dr = x(k + 1) - x(k);
        let num = dl * (f(k + 1) - f(k)) - dr * (f(k) - f(k - 1));
        interior += num * num / ((dr + dl) * dr * dl);
    }
    let b2 = (f(n) - f(n - 1)).powi(2) / (x(n) - x(n - 1));
    Ok(CvTerms { b1, interior, b2 })
}

/// Leave-one-out cross-validation estimate of the amplitude.
pub fn cv_estimate(part: &Partition, fvals: &[f64]) -> Result<ScaleEstimate> {
    let t = cv_terms(part, fvals)?;
    let n = part.len();
    Ok(ScaleEstimate {
        value: (t.b1 + t.interior + t.b2) / n as f64,
        estimator: ScaleEstimator::Cv,
        n,
    })
}

/// CV with the two boundary terms removed.
pub fn icv_estimate(part: &Partition, fvals: &[f64]) -> Result<ScaleEstimate> {
    let t = cv_terms(part, fvals)?;
    let n = part.len();
    Ok(ScaleEstimate {
        value: t.interior / n as f64,
        estimator: ScaleEstimator::Icv,
        n,
    })
}

/// Maximum-likelihood estimate `(1/N) sum (f_n - f_{n-1})^2 / (x_n - x_{n-1})`.
pub fn ml_estimate(part: &Partition, fvals: &[f64]) -> Result<ScaleEstimate> {
    part.check_values(fvals)?;
    let n = part.len();
    let sum: f64 = (1..=n)
        .map(|k| (f_at(fvals, k) - f_at(fvals, k - 1)).powi(2) / (part.x(k) - part.x(k - 1)))
        .sum();
    Ok(ScaleEstimate {
        value: sum / n as f64,
        estimator: ScaleEstimator::Ml,
        n,
    })
}

/// Sum of squared increments, starting from `f(0) = 0`.
pub fn quadratic_variation(fvals: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut acc = 0.0;
    for &f in fvals {
        acc += (f - prev) * (f - prev);
        prev = f;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0.0, 1.0], 1.0).is_err());
        assert!(Partition::new(vec![0.5, 0.5], 1.0).is_err());
        assert!(Partition::new(vec![0.5, 1.5], 1.0).is_err());
        assert!(Partition::new(vec![], 1.0).is_err());
        let p = Partition::uniform(4, 2.0).unwrap();
        assert_eq!(p.points(), &[0.5, 1.0, 1.5, 2.0]);
        assert!(p.is_uniform());
    }

    #[test]
    fn gram_inverse_examples() {
        let inv = bm_gram_inverse(&Partition::new(vec![1.0, 2.0], 2.0).unwrap());
        assert_eq!(inv.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        let single = bm_gram_inverse(&Partition::new(vec![0.25], 1.0).unwrap());
        assert_eq!(single.diag, vec![4.0]);
    }

    #[test]
    fn posterior_mean_interpolates() {
        let p = Partition::new(vec![0.2, 0.5, 0.8], 1.0).unwrap();
        let f = [1.0, -1.0, 2.0];
        assert_eq!(bm_posterior_mean(&p, &f, 0.5).unwrap(), -1.0);
        assert!((bm_posterior_mean(&p, &f, 0.35).unwrap()).abs() < 1e-15);
        assert!((bm_posterior_mean(&p, &f, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(bm_posterior_mean(&p, &f, 0.95).unwrap(), 2.0);
        assert!(bm_posterior_mean(&p, &f, 1.5).is_err());
    }

    #[test]
    fn posterior_cov_cells() {
        let p = Partition::new(vec![0.2, 0.5, 0.8], 1.0).unwrap();
        assert!((bm_posterior_cov(&p, 0.3, 0.3).unwrap() - 0.2 * 0.1 / 0.3).abs() < 1e-15);
        assert_eq!(bm_posterior_cov(&p, 0.3, 0.6).unwrap(), 0.0);
        assert!((bm_posterior_cov(&p, 0.9, 0.95).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(bm_posterior_cov(&p, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn linear_function_on_grid() {
        for n in [3usize, 10, 57] {
            let p = Partition::uniform(n, 1.0).unwrap();
            let f: Vec<f64> = p.points().to_vec();
            let nf = n as f64;
            let cv = cv_estimate(&p, &f).unwrap().value;
            assert!((cv - 1.0 / (nf * nf)).abs() < 1e-14);
            assert!((ml_estimate(&p, &f).unwrap().value - 1.0 / nf).abs() < 1e-14);
            assert!(icv_estimate(&p, &f).unwrap().value.abs() < 1e-14);
            assert!((quadratic_variation(&f) - 1.0 / nf).abs() < 1e-14);
        }
    }

    #[test]
    fn small_partitions_rejected_for_cv() {
        let p = Partition::uniform(2, 1.0).unwrap();
        assert!(cv_estimate(&p, &[1.0, 2.0]).is_err());
        assert!(icv_estimate(&p, &[1.0, 2.0]).is_err());
        assert_eq!(ml_estimate(&p, &[0.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn step_contributes_unit_quadratic_variation() {
        let f = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(quadratic_variation(&f), 1.0);
    }
}
