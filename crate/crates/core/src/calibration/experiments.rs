//! Rate and calibration-ratio experiments over seeded replicate paths.

use rayon::prelude::*;

use super::paths::{sample_path, PathSamplerSpec, Process};
use super::{Partition, ScaleEstimator};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Least-squares slope of `log(value)` against `log(n)`.
pub fn rate_slope(ns: &[f64], values: &[f64]) -> Result<f64> {
    if ns.len() != values.len() {
        return Err(Error::Shape(format!("{} sizes and {} values", ns.len(), values.len())));
    }
    if ns.len() < 3 {
        return Err(Error::Empty("a rate slope needs at least three sizes".into()));
    }
    if let Some(v) = ns.iter().chain(values).find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("log-log fit needs positive values, got {v}")));
    }
    let lx: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// `mean(squared error) / (mean(tau2_hat) * var_bq)`.
pub fn ratio_from_replicates(sq_errors: &[f64], tau_hats: &[f64], var_bq: f64) -> Result<f64> {
    if sq_errors.is_empty() || sq_errors.len() != tau_hats.len() {
        return Err(Error::Shape("need equally many non-zero errors and amplitude estimates".into()));
    }
    let k = sq_errors.len() as f64;
    let mse = sq_errors.iter().sum::<f64>() / k;
    let tau = tau_hats.iter().sum::<f64>() / k;
    Ok(mse / (tau * var_bq))
}

/// BQ mean and variance for unit-amplitude Brownian motion and Lebesgue
/// measure on `[0, T]`: the integral of the interpolant and
/// `sum dx^3 / 12 + (T - x_N)^3 / 3`.
pub fn bm_bq_estimate(part: &Partition, fvals: &[f64]) -> Result<(f64, f64)> {
    part.check_values(fvals)?;
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut prev = (0.0, 0.0);
    for (&x, &f) in part.points().iter().zip(fvals) {
        let d = x - prev.0;
        mean += 0.5 * d * (f + prev.1);
        var += d * d * d / 12.0;
        prev = (x, f);
    }
    let tail = part.t() - prev.0;
    mean += tail * prev.1;
    var += tail * tail * tail / 3.0;
    Ok((mean, var))
}

/// Calibration ratios for one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibRatios {
    pub n: usize,
    pub reps: usize,
    pub mean_sq_error: f64,
    pub var_bq: f64,
    pub mean_cv: f64,
    pub mean_ml: f64,
    pub mean_icv: f64,
    pub r_cv: f64,
    pub r_ml: f64,
    pub r_icv: f64,
}

/// Refinement of the reference grid used for the true integral.
const TRUTH_REFINEMENT: usize = 16;

/// Monte Carlo calibration ratios of BQ on the equal grid of `n` nodes.
///
/// Each replicate samples the process on a grid 16 times finer, takes the
/// trapezoid integral there as the truth and keeps every 16th value as data.
pub fn calib_ratio_bq(process: Process, t: f64, n: usize, reps: usize, seed: u64) -> Result<CalibRatios> {
    if reps == 0 {
        return Err(Error::Empty("calibration ratio needs at least one replicate".into()));
    }
    let coarse = Partition::uniform(n, t)?;
    let fine = Partition::uniform(n * TRUTH_REFINEMENT, t)?;
    let base = RngStream::new(seed).split(&format!("calib/{}/N={n}", process.name()));
    let per_rep: Vec<Result<[f64; 4]>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = base.split_indexed("rep", r).seed();
            let path = sample_path(&PathSamplerSpec::new(process, fine.clone(), rep_seed))?;
            let h = t / fine.len() as f64;
            let mut truth = 0.0;
            let mut prev = 0.0;
            for &f in &path {
                truth += 0.5 * h * (prev + f);
                prev = f;
            }
            let data: Vec<f64> = (1..=n).map(|k| path[k * TRUTH_REFINEMENT - 1]).collect();
            let (est, _) = bm_bq_estimate(&coarse, &data)?;
            Ok([
                (truth - est).powi(2),
                ScaleEstimator::Cv.estimate(&coarse, &data)?.value,
                ScaleEstimator::Ml.estimate(&coarse, &data)?.value,
                ScaleEstimator::Icv.estimate(&coarse, &data)?.value,
            ])
        })
        .collect();
    let rows = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let (_, var_bq) = bm_bq_estimate(&coarse, &vec![0.0; n])?;
    let errs = col(0);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(CalibRatios {
        n,
        reps,
        mean_sq_error: mean(&errs),
        var_bq,
        mean_cv: mean(&col(1)),
        mean_ml: mean(&col(2)),
        mean_icv: mean(&col(3)),
        r_cv: ratio_from_replicates(&errs, &col(1), var_bq)?,
        r_ml: ratio_from_replicates(&errs, &col(2), var_bq)?,
        r_icv: ratio_from_replicates(&errs, &col(3), var_bq)?,
    })
}

/// One replicate of a rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub process: String,
    pub hurst: Option<f64>,
    pub s: u32,
    pub estimator: ScaleEstimator,
    pub n: usize,
    pub seed: u64,
    pub tau2_hat: f64,
}

impl RateRecord {
    pub fn csv_header() -> [&'static str; 7] {
        ["process", "H", "s", "estimator", "N", "seed", "tau2_hat"]
    }

    pub fn to_csv_row(&self) -> [String; 7] {
        [
            self.process.clone(),
            self.hurst.map(|h| format!("{h:?}")).unwrap_or_default(),
            self.s.to_string(),
            self.estimator.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
            format!("{:?}", self.tau2_hat),
        ]
    }
}

/// Amplitude estimates on equal grids of `[0, t]` for every size, estimator
/// and replicate, ordered by size, then replicate, then estimator.
pub fn rate_experiment(
    process: Process,
    t: f64,
    ns: &[usize],
    estimators: &[ScaleEstimator],
    reps: usize,
    seed: u64,
) -> Result<Vec<RateRecord>> {
    let mut out = Vec::with_capacity(ns.len() * reps * estimators.len());
    for &n in ns {
        let grid = Partition::uniform(n, t)?;
        let base = RngStream::new(seed).split(&format!("rates/{}/N={n}", process.name()));
        let per_rep: Vec<Result<Vec<RateRecord>>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let rep_seed = base.split_indexed("rep", r).seed();
                let path = sample_path(&PathSamplerSpec::new(process, grid.clone(), rep_seed))?;
                estimators
                    .iter()
                    .map(|e| {
                        Ok(RateRecord {
                            process: process.name().to_string(),
                            hurst: process.hurst(),
                            s: process.smoothness(),
                            estimator: *e,
                            n,
                            seed: rep_seed,
                            tau2_hat: e.estimate(&grid, &path)?.value,
                        })
                    })
                    .collect()
            })
            .collect();
        for rows in per_rep {
            out.extend(rows?);
        }
    }
    Ok(out)
}
