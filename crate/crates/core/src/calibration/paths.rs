//! Seeded Gaussian test-function paths on a partition.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Partition;
use crate::error::{Error, Result};
use crate::gp::JitterPolicy;
use crate::kernels::KernelSpec;
use crate::linalg::cholesky_with_jitter;
use crate::rng::RngStream;

/// Largest grid sampled through a dense covariance factorization.
pub const MAX_CHOLESKY_POINTS: usize = 20_000;

/// Fine-grid refinement used when integrating paths numerically.
const INTEGRATION_REFINEMENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    Bm,
    Fbm { hurst: f64 },
    Ifbm { hurst: f64 },
    Iifbm { hurst: f64 },
    Ou { rate: f64 },
    /// `sin(10 x) + 1{x > x0}` with `x0 ~ U(0, 1)`.
    PiecewiseJump,
}

impl Process {
    pub fn name(&self) -> &'static str {
        match self {
            Process::Bm => "BM",
            Process::Fbm { .. } => "FBM",
            Process::Ifbm { .. } => "IFBM",
            Process::Iifbm { .. } => "IIFBM",
            Process::Ou { .. } => "OU",
            Process::PiecewiseJump => "JUMP",
        }
    }

    pub fn hurst(&self) -> Option<f64> {
        match self {
            Process::Fbm { hurst } | Process::Ifbm { hurst } | Process::Iifbm { hurst } => Some(*hurst),
            Process::Bm => Some(0.5),
            _ => None,
        }
    }

    /// Number of integrations applied to the rough base path.
    pub fn smoothness(&self) -> u32 {
        match self {
            Process::Ifbm { .. } => 1,
            Process::Iifbm { .. } => 2,
            _ => 0,
        }
    }

    /// Parses `BM`, `FBM`, `IFBM`, `IIFBM`, `OU`, `JUMP` with an optional parameter.
    pub fn parse(name: &str, param: Option<f64>) -> Result<Self> {
        let need = |what: &str| {
            param.ok_or_else(|| Error::InvalidParameter(format!("process {name} needs {what}")))
        };
        let p = match name.trim().to_ascii_uppercase().as_str() {
            "BM" => Process::Bm,
            "FBM" => Process::Fbm { hurst: need("H")? },
            "IFBM" => Process::Ifbm { hurst: need("H")? },
            "IIFBM" => Process::Iifbm { hurst: need("H")? },
            "OU" => Process::Ou { rate: need("lambda")? },
            "JUMP" => Process::PiecewiseJump,
            other => return Err(Error::InvalidParameter(format!("unknown process '{other}'"))),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        match self {
            Process::Fbm { hurst } | Process::Ifbm { hurst } | Process::Iifbm { hurst }
                if !(*hurst > 0.0 && *hurst < 1.0) =>
            {
                Err(Error::InvalidParameter(format!("Hurst parameter must lie in (0, 1), got {hurst}")))
            }
            Process::Ou { rate } if !(*rate > 0.0) => {
                Err(Error::InvalidParameter(format!("OU rate must be positive, got {rate}")))
            }
            _ => Ok(()),
        }
    }

    /// Covariance kernel with unit amplitude, where one exists in closed form.
    pub fn kernel(&self) -> Option<KernelSpec> {
        match *self {
            Process::Bm => KernelSpec::brownian(1.0).ok(),
            Process::Fbm { hurst } => KernelSpec::fbm(hurst, 1.0).ok(),
            Process::Ifbm { hurst } => KernelSpec::ifbm(hurst, 1.0).ok(),
            Process::Ou { rate } => KernelSpec::ornstein_uhlenbeck(rate, 1.0).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMethod {
    /// Fastest exact method available for the process and grid.
    Auto,
    /// Dense factorization of the process covariance on the grid.
    Cholesky,
    /// Circulant embedding on equal grids (fBm family only).
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSamplerSpec {
    pub process: Process,
    pub grid: Partition,
    pub seed: u64,
    pub amplitude: f64,
    pub method: SamplingMethod,
}

impl PathSamplerSpec {
    pub fn new(process: Process, grid: Partition, seed: u64) -> Self {
        Self {
            process,
            grid,
            seed,
            amplitude: 1.0,
            method: SamplingMethod::Auto,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_method(mut self, method: SamplingMethod) -> Self {
        self.method = method;
        self
    }
}

/// Draws the path at the grid nodes.
pub fn sample_path(spec: &PathSamplerSpec) -> Result<Vec<f64>> {
    spec.process.validate()?;
    if !(spec.amplitude > 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude must be positive, got {}", spec.amplitude)));
    }
    let mut rng = RngStream::new(spec.seed).split("path");
    let grid = &spec.grid;
    let x = grid.points();
    let scale = spec.amplitude.sqrt();
    let uniform = grid.is_uniform();
    let path = match (spec.process, spec.method) {
        (Process::PiecewiseJump, _) => {
            let x0 = rng.next_uniform();
            x.iter()
                .map(|&v| (10.0 * v).sin() + if v > x0 { 1.0 } else { 0.0 })
                .collect()
        }
        (Process::Bm, SamplingMethod::Auto) => {
            let mut prev_x = 0.0;
            let mut acc = 0.0;
            x.iter()
                .map(|&v| {
                    acc += (v - prev_x).sqrt() * rng.next_normal();
                    prev_x = v;
                    scale * acc
                })
                .collect()
        }
        (Process::Ou { rate }, SamplingMethod::Auto) => {
            let mut prev_x = 0.0;
            let mut f = 0.0;
            x.iter()
                .map(|&v| {
                    let a = (-rate * (v - prev_x)).exp();
                    f = a * f + ((1.0 - a * a) / 4.0).sqrt() * rng.next_normal();
                    prev_x = v;
                    scale * f
                })
                .collect()
        }
        (Process::Fbm { hurst }, SamplingMethod::Auto | SamplingMethod::Spectral) if uniform => {
            let h = grid.t() / x.len() as f64;
            fbm_increments(x.len(), h, hurst, &mut rng)?
                .into_iter()
                .scan(0.0, |acc, d| {
                    *acc += d;
                    Some(scale * *acc)
                })
                .collect()
        }
        (Process::Ifbm { hurst }, SamplingMethod::Auto | SamplingMethod::Spectral) if uniform => {
            integrated_fbm(x.len(), grid.t(), hurst, 1, &mut rng)?
                .into_iter()
                .map(|v| scale * v)
                .collect()
        }
        (Process::Iifbm { hurst }, _) => {
            // no closed-form kernel: integrate on a fine equal grid and
            // interpolate to the nodes
            let fine_n = if uniform { x.len() } else { x.len().max(1000) };
            let vals = integrated_fbm(fine_n, grid.t(), hurst, 2, &mut rng)?;
            let h = grid.t() / fine_n as f64;
            x.iter()
                .map(|&v| scale * interpolate_uniform(&vals, h, v))
                .collect()
        }
        (Process::Fbm { .. } | Process::Ifbm { .. }, SamplingMethod::Spectral) => {
            return Err(Error::InvalidParameter(
                "spectral sampling needs an equally spaced grid".into(),
            ))
        }
        (process, _) => {
            let kernel = process.kernel().expect("processes without kernels handled above");
            cholesky_path(&kernel, x, &mut rng)?
                .into_iter()
                .map(|v| scale * v)
                .collect()
        }
    };
    Ok(path)
}

/// Linear interpolation of values given at `h, 2h, ...` with value 0 at 0.
fn interpolate_uniform(vals: &[f64], h: f64, x: f64) -> f64 {
    let pos = x / h;
    let k = (pos.floor() as usize).min(vals.len());
    let at = |i: usize| if i == 0 { 0.0 } else { vals[i - 1] };
    if k >= vals.len() {
        return vals[vals.len() - 1];
    }
    let frac = pos - k as f64;
    at(k) + frac * (at(k + 1) - at(k))
}

fn cholesky_path(kernel: &KernelSpec, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    let n = x.len();
    if n > MAX_CHOLESKY_POINTS {
        return Err(Error::InvalidParameter(format!(
            "dense path sampling is limited to {MAX_CHOLESKY_POINTS} nodes, got {n}"
        )));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| kernel.eval_unchecked(&[x[i]], &[x[j]]));
    let factor = cholesky_with_jitter(&cov, &JitterPolicy::default())
        .map_err(|e| e.context(format!("sampling a {kernel} path")))?;
    let z = nalgebra::DVector::from_vec(rng.normal(n));
    Ok((factor.l() * z).as_slice().to_vec())
}

/// `n` fractional Gaussian noise increments on a grid of step `h`, by exact
/// circulant embedding of the increment autocovariance.
fn fbm_increments(n: usize, h: f64, hurst: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    let e = 2.0 * hurst;
    let scale = h.powf(e) / 2.0;
    let gamma = |k: usize| {
        let k = k as f64;
        scale * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
    };
    if n == 1 {
        return Ok(vec![(2.0 * scale).sqrt() * rng.next_normal()]);
    }
    let m = 2 * n;
    let mut c: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(gamma(k), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let max_eig = c.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let mut w = Vec::with_capacity(m);
    for v in &c {
        let lambda = v.re;
        if lambda < -1e-10 * max_eig {
            return Err(Error::NegativeVariance(lambda));
        }
        let s = (lambda.max(0.0) / m as f64).sqrt();
        w.push(Complex::new(s * rng.next_normal(), s * rng.next_normal()));
    }
    fft.process(&mut w);
    Ok(w[..n].iter().map(|v| v.re).collect())
}

/// fBm integrated `times` times with the trapezoid rule on a grid
/// [`INTEGRATION_REFINEMENT`] times finer than `n` equal cells of `[0, t]`,
/// returned at the `n` coarse nodes.
fn integrated_fbm(n: usize, t: f64, hurst: f64, times: u32, rng: &mut RngStream) -> Result<Vec<f64>> {
    let r = INTEGRATION_REFINEMENT;
    let fine = n * r;
    let h = t / fine as f64;
    let mut path = vec![0.0; fine + 1];
    let inc = fbm_increments(fine, h, hurst, rng)?;
    for i in 0..fine {
        path[i + 1] = path[i] + inc[i];
    }
    for _ in 0..times {
        let mut acc = 0.0;
        let mut next = vec![0.0; fine + 1];
        for i in 0..fine {
            acc += 0.5 * h * (path[i] + path[i + 1]);
            next[i + 1] = acc;
        }
        path = next;
    }
    Ok((1..=n).map(|k| path[k * r]).collect())
}
