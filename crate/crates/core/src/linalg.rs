use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Jitter escalation schedule, as multiples of the mean Gram diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterPolicy {
    pub relative_steps: Vec<f64>,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            relative_steps: vec![0.0, 1e-12, 1e-10, 1e-8, 1e-6],
        }
    }
}

impl JitterPolicy {
    /// Only attempt the matrix as given.
    pub fn none() -> Self {
        Self {
            relative_steps: vec![0.0],
        }
    }
}

/// Cholesky factor together with the absolute jitter added to the diagonal.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Factorizes `a`, escalating diagonal jitter according to `policy`.
pub fn cholesky_with_jitter(a: &DMatrix<f64>, policy: &JitterPolicy) -> Result<Factor> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Shape(format!(
            "cannot factorize a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let mean_diag = a.diagonal().mean();
    let mut last = 0.0;
    for &step in &policy.relative_steps {
        let jitter = step * mean_diag.abs();
        last = jitter;
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l_dirty();
            if (0..n).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                return Ok(Factor { chol, jitter });
            }
        }
    }
    let diag = a.diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Err(Error::Singular {
        jitter: last,
        condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
    })
}
