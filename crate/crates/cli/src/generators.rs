//! Data generators: g-and-k, Laplace and the Bayesian linear-regression task.

use kdisc::bq::Measure;
use kdisc::cbq::ConditionalTask;
use kdisc::{Error, KernelSpec, MaternOrder, Points, Result, RngStream};
use nalgebra::{DMatrix, DVector};

/// g-and-k parameters `(A, B, g, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GandK {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub k: f64,
}

impl GandK {
    pub fn new(a: f64, b: f64, g: f64, k: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::InvalidParameter(format!("g-and-k scale must be positive, got {b}")));
        }
        Ok(Self { a, b, g, k })
    }

    /// The benchmark parameter `(3, 1, 0.1, 0.1)`.
    pub fn benchmark() -> Self {
        Self {
            a: 3.0,
            b: 1.0,
            g: 0.1,
            k: 0.1,
        }
    }

    /// Quantile-function transform of one standard normal draw.
    pub fn transform(&self, z: f64) -> f64 {
        let e = (-self.g * z).exp();
        let skew = 1.0 + 0.8 * (1.0 - e) / (1.0 + e);
        self.a + self.b * skew * (1.0 + z * z).powf(self.k) * z
    }
}

/// Maps base draws `u ~ N(0, 1)` through the g-and-k transform.
pub fn gandk_generate(theta: &GandK, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&z| theta.transform(z)).collect()
}

pub fn gandk_sample(theta: &GandK, n: usize, rng: &mut RngStream) -> Points {
    Points::from_scalars(&gandk_generate(theta, &rng.normal(n)))
}

/// `n` draws of a `d`-dimensional standard Gaussian.
pub fn gaussian_sample(n: usize, d: usize, rng: &mut RngStream) -> Points {
    Points::new(rng.normal(n * d), d).expect("n * d values")
}

/// `n` draws of Laplace(0, scale) by inverting the CDF.
pub fn laplace_sample(n: usize, scale: f64, rng: &mut RngStream) -> Points {
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let u = rng.next_uniform() - 0.5;
            // u = -0.5 has probability zero but would give -inf
            -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
        })
        .collect();
    Points::from_scalars(&v)
}

/// Bayesian linear regression with prior `N(0, diag(theta))` on the weights
/// and Gaussian noise of precision `eta`, on fixed data `(Y, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinearModel {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub eta: f64,
}

/// Observations used by [`BayesLinearModel::generate`].
pub const BAYES_LINEAR_OBSERVATIONS: usize = 5;

impl BayesLinearModel {
    /// `Y` has i.i.d. standard normal entries and `Z = Y w + e` with true
    /// weights `w ~ N(0, I)` and noise `e ~ N(0, 1/eta)`.
    pub fn generate(d: usize, m: usize, eta: f64, seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidParameter("dimension and observation count must be positive".into()));
        }
        if !(eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise precision must be non-negative, got {eta}")));
        }
        let mut rng = RngStream::new(seed).split("bayes-linear-model");
        let design = DMatrix::from_row_slice(m, d, &rng.normal(m * d));
        let w = DVector::from_vec(rng.normal(d));
        let noise_sd = if eta > 0.0 { eta.sqrt().recip() } else { 0.0 };
        let noise = DVector::from_vec(rng.normal(m)) * noise_sd;
        let response = &design * w + noise;
        Ok(Self { design, response, eta })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn prior_diag(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let diag = match theta.len() {
            1 => vec![theta[0]; d],
            n if n == d => theta.to_vec(),
            n => {
                return Err(Error::Shape(format!("parameter has {n} entries, model dimension is {d}")));
            }
        };
        if let Some(v) = diag.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidParameter(format!("prior variances must be positive, got {v}")));
        }
        Ok(diag)
    }

    /// Posterior mean and covariance of the weights.
    pub fn posterior(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let diag = self.prior_diag(theta)?;
        let d = self.dim();
        let mut precision = self.design.transpose() * &self.design * self.eta;
        for i in 0..d {
            precision[(i, i)] += 1.0 / diag[i];
        }
        let cov = precision
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("posterior precision is not positive definite".into()))?
            .inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        let mean = &cov * self.design.transpose() * &self.response * self.eta;
        Ok((mean, cov))
    }

    pub fn measure(&self, theta: &[f64]) -> Result<Measure> {
        let (m, c) = self.posterior(theta)?;
        Measure::gaussian(m.as_slice().to_vec(), c)
    }

    /// `E[x^T x] = m^T m + tr Sigma` under the posterior.
    pub fn second_moment(&self, theta: &[f64]) -> Result<f64> {
        let (m, c) = self.posterior(theta)?;
        Ok(m.dot(&m) + c.trace())
    }
}

/// A conditional-expectation task on the Bayesian linear model together with
/// its analytic answer.
#[derive(Debug, Clone)]
pub struct BayesLinearTask {
    pub model: BayesLinearModel,
    pub task: ConditionalTask,
}

impl BayesLinearTask {
    pub fn truth(&self, theta: &[f64]) -> Result<f64> {
        self.model.second_moment(theta)
    }
}

/// Draws `n` posterior samples at every parameter in `thetas` and evaluates
/// `f(x) = x^T x`. The model comes from `model_seed` so that tasks with
/// different sample sizes share it. Stage kernels default to Gaussian on `x`
/// and Matern-3/2 on `theta`.
pub fn bayes_linear_task(model: &BayesLinearModel, thetas: &Points, n: usize, seed: u64) -> Result<BayesLinearTask> {
    let base = RngStream::new(seed).split("bayes-linear-samples");
    let mut samples = Vec::with_capacity(thetas.len());
    let mut fvals = Vec::with_capacity(thetas.len());
    for (t, th) in thetas.rows().enumerate() {
        let x = model.measure(th)?.sample(n, &mut base.split_indexed("theta", t))?;
        fvals.push(x.rows().map(|r| r.iter().map(|v| v * v).sum()).collect());
        samples.push(x);
    }
    let task = ConditionalTask::new(
        thetas.clone(),
        samples,
        fvals,
        |th| model.measure(th),
        KernelSpec::gaussian(1.0, 1.0)?,
        KernelSpec::matern(MaternOrder::ThreeHalves, 1.0, 1.0)?,
    )?;
    Ok(BayesLinearTask {
        model: model.clone(),
        task,
    })
}

/// `count` parameters uniform on `(lo, hi)^d`.
pub fn uniform_thetas(count: usize, d: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Points {
    let v = rng.uniform(count * d).into_iter().map(|u| lo + (hi - lo) * u).collect();
    Points::new(v, d).expect("count * d values")
}
