//! Maximum mean discrepancy estimators between empirical measures.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::points::Points;

/// Points with optional weights; absent weights mean `1/N` each.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Points,
    weights: Option<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn uniform(points: Points) -> Self {
        Self {
            points,
            weights: None,
        }
    }

    pub fn weighted(points: Points, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight {w} is not finite")));
        }
        Ok(Self {
            points,
            weights: Some(weights),
        })
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        Self::uniform(Points::from_scalars(values))
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn explicit_weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weights, materializing the uniform default.
    pub fn weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    V,
    U,
    Linear,
    Multi(usize),
    Weighted,
    Ekqd,
    SupKqd,
    CenteredEkqd,
}

impl Estimator {
    /// U and centered e-KQD may be negative; the others are squared norms.
    pub fn is_nonnegative(self) -> bool {
        !matches!(self, Estimator::U | Estimator::Multi(_) | Estimator::Linear | Estimator::CenteredEkqd)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::V => f.write_str("mmd_v"),
            Estimator::U => f.write_str("mmd_u"),
            Estimator::Linear => f.write_str("mmd_lin"),
            Estimator::Multi(r) => write!(f, "mmd_multi_r{r}"),
            Estimator::Weighted => f.write_str("mmd_weighted"),
            Estimator::Ekqd => f.write_str("ekqd"),
            Estimator::SupKqd => f.write_str("supkqd"),
            Estimator::CenteredEkqd => f.write_str("ekqd_centered"),
        }
    }
}

/// A discrepancy value plus what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyEstimate {
    pub value: f64,
    pub estimator: Estimator,
    pub n_p: usize,
    pub n_q: usize,
    pub kernel: String,
    pub seed: Option<u64>,
}

impl DiscrepancyEstimate {
    pub fn new(value: f64, estimator: Estimator, n_p: usize, n_q: usize, spec: &KernelSpec) -> Self {
        Self {
            value,
            estimator,
            n_p,
            n_q,
            kernel: spec.to_string(),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn csv_header() -> [&'static str; 6] {
        ["estimator", "n_p", "n_q", "kernel", "seed", "value"]
    }

    pub fn to_csv_row(&self) -> [String; 6] {
        [
            self.estimator.to_string(),
            self.n_p.to_string(),
            self.n_q.to_string(),
            self.kernel.clone(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:?}", self.value),
        ]
    }
}

fn check_pair(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("MMD needs two non-empty samples".into()));
    }
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "samples have dimensions {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Rows below this count are summed serially.
const PARALLEL_ROWS: usize = 256;

/// `sum_i sum_j a_i b_j k(x_i, y_j)`, optionally skipping `i == j` when
/// `x` and `y` are the same sample.
fn double_sum(spec: &KernelSpec, x: &Points, a: &[f64], y: &Points, b: &[f64], same: bool, skip_diag: bool) -> f64 {
    let row = |i: usize| -> f64 {
        let xi = x.row(i);
        if same {
            // lower triangle doubled plus the diagonal
            let mut acc = 0.0;
            for j in 0..i {
                acc += b[j] * spec.eval_unchecked(xi, y.row(j));
            }
            let diag = if skip_diag { 0.0 } else { b[i] * spec.eval_unchecked(xi, xi) };
            a[i] * (2.0 * acc + diag)
        } else {
            let mut acc = 0.0;
            for (j, yj) in y.rows().enumerate() {
                acc += b[j] * spec.eval_unchecked(xi, yj);
            }
            a[i] * acc
        }
    };
    // per-row partial sums are combined in index order so the result does not
    // depend on the thread count
    let partial: Vec<f64> = if x.len() >= PARALLEL_ROWS {
        (0..x.len()).into_par_iter().map(row).collect()
    } else {
        (0..x.len()).map(row).collect()
    };
    partial.iter().sum()
}

fn mean_feature(spec: &KernelSpec, x: &Points, w: &[f64]) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for (row, wi) in x.rows().zip(w) {
        let phi = spec.feature_map(row).expect("feature map checked by caller");
        if acc.is_empty() {
            acc = vec![0.0; phi.len()];
        }
        for (a, p) in acc.iter_mut().zip(phi) {
            *a += wi * p;
        }
    }
    acc
}

fn diag_sum(spec: &KernelSpec, x: &Points, w: &[f64]) -> f64 {
    x.rows().zip(w).map(|(r, wi)| wi * wi * spec.eval_unchecked(r, r)).sum()
}

/// Weighted sum `sum_i sum_j w_i v_j k(x_i, y_j)` between two measures.
pub fn kernel_mean_product(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    check_pair(p, q)?;
    spec.check_points(p.points())?;
    spec.check_points(q.points())?;
    let (a, b) = (p.weights(), q.weights());
    if spec.has_feature_map(p.dim()) {
        let (fp, fq) = (mean_feature(spec, p.points(), &a), mean_feature(spec, q.points(), &b));
        return Ok(fp.iter().zip(&fq).map(|(u, v)| u * v).sum());
    }
    let same = p.points() == q.points() && a == b;
    Ok(double_sum(spec, p.points(), &a, q.points(), &b, same, false))
}

/// Weighted squared MMD `||sum w_i k(x_i,.) - sum v_j k(y_j,.)||^2` for any weights.
fn weighted_norm(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    check_pair(p, q)?;
    spec.check_points(p.points())?;
    spec.check_points(q.points())?;
    if p == q {
        return Ok(0.0);
    }
    let (a, b) = (p.weights(), q.weights());
    if spec.has_feature_map(p.dim()) {
        let fp = mean_feature(spec, p.points(), &a);
        let fq = mean_feature(spec, q.points(), &b);
        return Ok(fp.iter().zip(&fq).map(|(u, v)| (u - v) * (u - v)).sum());
    }
    let pp = double_sum(spec, p.points(), &a, p.points(), &a, true, false);
    let qq = double_sum(spec, q.points(), &b, q.points(), &b, true, false);
    let pq = double_sum(spec, p.points(), &a, q.points(), &b, false, false);
    Ok(pp - 2.0 * pq + qq)
}

fn require_uniform(m: &EmpiricalMeasure, what: &str) -> Result<()> {
    if m.is_uniform() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} expects uniformly weighted samples")))
    }
}

/// Biased V-statistic estimate of MMD squared.
pub fn mmd2_v(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    require_uniform(p, "mmd2_v")?;
    require_uniform(q, "mmd2_v")?;
    weighted_norm(spec, p, q)
}

/// Unbiased U-statistic estimate of MMD squared; may be negative.
pub fn mmd2_u(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    require_uniform(p, "mmd2_u")?;
    require_uniform(q, "mmd2_u")?;
    check_pair(p, q)?;
    let (n, m) = (p.len(), q.len());
    if n < 2 || m < 2 {
        return Err(Error::Empty(format!(
            "U-statistic needs at least two points per sample, got {n} and {m}"
        )));
    }
    spec.check_points(p.points())?;
    spec.check_points(q.points())?;
    let (nf, mf) = (n as f64, m as f64);
    let ones_p = vec![1.0; n];
    let ones_q = vec![1.0; m];
    let (pp, qq, pq) = if spec.has_feature_map(p.dim()) {
        let fp = mean_feature(spec, p.points(), &ones_p);
        let fq = mean_feature(spec, q.points(), &ones_q);
        let dotp = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        (
            dotp(&fp, &fp) - diag_sum(spec, p.points(), &ones_p),
            dotp(&fq, &fq) - diag_sum(spec, q.points(), &ones_q),
            dotp(&fp, &fq),
        )
    } else {
        (
            double_sum(spec, p.points(), &ones_p, p.points(), &ones_p, true, true),
            double_sum(spec, q.points(), &ones_q, q.points(), &ones_q, true, true),
            double_sum(spec, p.points(), &ones_p, q.points(), &ones_q, false, false),
        )
    };
    Ok(pp / (nf * (nf - 1.0)) + qq / (mf * (mf - 1.0)) - 2.0 * pq / (nf * mf))
}

/// Equal-size U-statistic `1/(N(N-1)) sum_{i != j} h(z_i, z_j)` with
/// `h = k(x_i,x_j) + k(y_i,y_j) - k(x_i,y_j) - k(x_j,y_i)`. Unbiased like
/// [`mmd2_u`] but also drops the paired cross terms, so it vanishes exactly
/// when the two samples coincide point by point.
pub fn mmd2_u_paired(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    let n = equal_sizes(p, q, "mmd2_u_paired")?;
    spec.check_points(p.points())?;
    spec.check_points(q.points())?;
    if p == q {
        return Ok(0.0);
    }
    let (x, y) = (p.points(), q.points());
    let ones = vec![1.0; n];
    let (pp, qq, pq) = if spec.has_feature_map(p.dim()) {
        let fp = mean_feature(spec, x, &ones);
        let fq = mean_feature(spec, y, &ones);
        let dotp = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        (dotp(&fp, &fp), dotp(&fq, &fq), dotp(&fp, &fq))
    } else {
        (
            double_sum(spec, x, &ones, x, &ones, true, false),
            double_sum(spec, y, &ones, y, &ones, true, false),
            double_sum(spec, x, &ones, y, &ones, false, false),
        )
    };
    let diag: f64 = (0..n)
        .map(|i| {
            let (a, b) = (x.row(i), y.row(i));
            spec.eval_unchecked(a, a) + spec.eval_unchecked(b, b) - 2.0 * spec.eval_unchecked(a, b)
        })
        .sum();
    let nf = n as f64;
    Ok((pp + qq - 2.0 * pq - diag) / (nf * (nf - 1.0)))
}

fn equal_sizes(p: &EmpiricalMeasure, q: &EmpiricalMeasure, what: &str) -> Result<usize> {
    check_pair(p, q)?;
    require_uniform(p, what)?;
    require_uniform(q, what)?;
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "{what} needs equal sample sizes, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    spec_free_len(p.len(), what)
}

fn spec_free_len(n: usize, what: &str) -> Result<usize> {
    if n < 2 {
        return Err(Error::Empty(format!("{what} needs at least two points per sample")));
    }
    Ok(n)
}

/// Linear-time estimator averaging `floor(N/2)` disjoint pair terms.
/// Pairs follow input order; an odd trailing point is dropped.
pub fn mmd2_linear(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    let n = equal_sizes(p, q, "mmd2_linear")?;
    spec.check_points(p.points())?;
    spec.check_points(q.points())?;
    let (x, y) = (p.points(), q.points());
    let k = |a: &[f64], b: &[f64]| spec.eval_unchecked(a, b);
    let blocks = n / 2;
    let mut acc = 0.0;
    for b in 0..blocks {
        let (i, j) = (2 * b, 2 * b + 1);
        acc += k(x.row(i), x.row(j)) + k(y.row(i), y.row(j)) - k(x.row(i), y.row(j)) - k(x.row(j), y.row(i));
    }
    Ok(acc / blocks as f64)
}

/// Incomplete U-statistic over the first `r` sub-diagonals.
pub fn mmd2_multi(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure, r: usize) -> Result<f64> {
    let n = equal_sizes(p, q, "mmd2_multi")?;
    if r < 1 || r > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "sub-diagonal count must lie in 1..={}, got {r}",
            n - 1
        )));
    }
    spec.check_points(p.points())?;
    spec.check_points(q.points())?;
    let (x, y) = (p.points(), q.points());
    let k = |a: &[f64], b: &[f64]| spec.eval_unchecked(a, b);
    let mut acc = 0.0;
    for s in 1..=r {
        for i in 0..n - s {
            let j = i + s;
            acc += k(x.row(i), x.row(j)) + k(y.row(i), y.row(j)) - k(x.row(i), y.row(j)) - k(x.row(j), y.row(i));
        }
    }
    let (rf, nf) = (r as f64, n as f64);
    Ok(2.0 * acc / (rf * (2.0 * nf - rf - 1.0)))
}

/// MMD squared between a weighted measure and a sample.
pub fn mmd2_weighted(spec: &KernelSpec, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    if p.is_uniform() {
        return Err(Error::InvalidParameter(
            "mmd2_weighted expects explicit weights on the first measure".into(),
        ));
    }
    weighted_norm(spec, p, q)
}

/// Convenience wrapper producing a [`DiscrepancyEstimate`].
pub fn estimate(
    spec: &KernelSpec,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    estimator: Estimator,
) -> Result<DiscrepancyEstimate> {
    let value = match estimator {
        Estimator::V => mmd2_v(spec, p, q)?,
        Estimator::U => mmd2_u(spec, p, q)?,
        Estimator::Linear => mmd2_linear(spec, p, q)?,
        Estimator::Multi(r) => mmd2_multi(spec, p, q, r)?,
        Estimator::Weighted => mmd2_weighted(spec, p, q)?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "{other} is not an MMD estimator"
            )))
        }
    };
    Ok(DiscrepancyEstimate::new(value, estimator, p.len(), q.len(), spec))
}
