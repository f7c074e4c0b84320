//! Experiment computations and the subcommands that wrap them.

use std::time::Instant;

use kdisc::bq::{ow_weights, KernelEmbedding, Measure};
use kdisc::calibration::{rate_experiment, rate_slope, Process, RateRecord, ScaleEstimator};
use kdisc::cbq::{
    cbq_fit, cbq_predict, empirical_bayes_grid, klsmc_fit, lsmc_fit, CbqOptions, HyperGrid,
};
use kdisc::kernels::median_heuristic;
use kdisc::mmd::{estimate, kernel_mean_product, EmpiricalMeasure, Estimator};
use kdisc::two_sample::{
    rejection_rates, KernelChoice, KqdBudget, KqdKind, KqdStatistic, MmdKind, MmdStatistic, TestConfig,
    TwoSampleStatistic,
};
use kdisc::kqd::KqdConfig;
use kdisc::{Error, JitterPolicy, KernelSpec, MaternOrder, Points, RngStream};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::generators::{
    bayes_linear_task, gandk_generate, gandk_sample, gaussian_sample, laplace_sample, uniform_thetas,
    BayesLinearModel, GandK, BAYES_LINEAR_OBSERVATIONS,
};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// One CSV table plus the headline metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub id: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub metric_name: String,
    pub metric: f64,
    pub notes: Vec<String>,
}

impl Report {
    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// `id metric=value runtime=secs`.
    pub fn summary_line(&self, seconds: f64) -> String {
        format!("{} {}={} runtime={seconds:.3}s", self.id, self.metric_name, fmt_f64(self.metric))
    }
}

pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { name, default, help }
}

pub struct ExperimentSpec {
    pub id: &'static str,
    pub about: &'static str,
    pub keys: &'static [KeySpec],
    run: fn(&Config, u64) -> CliResult<Report>,
}

/// Keys accepted by every experiment.
pub const COMMON_KEYS: &[KeySpec] = &[
    key("seed", "0", "root seed"),
    key("reps", "(per experiment)", "replicates"),
    key("out", "<id>.csv", "output CSV path"),
];

pub const EXPERIMENTS: &[ExperimentSpec] = &[
    ExperimentSpec {
        id: "calib-rates",
        about: "amplitude estimates on simulated paths over a grid of N, with log-log slopes",
        keys: &[
            key("process", "ifbm", "bm | fbm | ifbm | iifbm | ou | jump"),
            key("hurst", "0.5", "Hurst index for fbm/ifbm/iifbm, rate for ou"),
            key("estimators", "CV,ML", "comma list of CV, ML, ICV"),
            key("ns", "100,1000,10000", "grid sizes"),
            key("t", "1", "domain length"),
        ],
        run: run_calib_rates,
    },
    ExperimentSpec {
        id: "calib-limits",
        about: "mean amplitude estimates at a single N",
        keys: &[
            key("process", "bm", "bm | fbm | ifbm | iifbm | ou | jump"),
            key("hurst", "0.5", "Hurst index for fbm/ifbm/iifbm, rate for ou"),
            key("estimators", "CV,ML", "comma list of CV, ML, ICV"),
            key("n", "10000", "grid size"),
            key("t", "1", "domain length"),
        ],
        run: run_calib_limits,
    },
    ExperimentSpec {
        id: "mmd-bench",
        about: "discrepancy estimators between N(0, I) and a shifted Gaussian",
        keys: &[
            key("estimators", "V,U,LIN,MULTI,EKQD", "comma list of V, U, LIN, MULTI, EKQD, SUPKQD"),
            key("ns", "100,1000", "sample sizes"),
            key("d", "1", "dimension"),
            key("shift", "0.5", "mean shift of the second sample in every coordinate"),
            key("lengthscale", "median", "Gaussian kernel lengthscale, or 'median'"),
        ],
        run: run_mmd_bench,
    },
    ExperimentSpec {
        id: "ow-bench",
        about: "optimally weighted vs V-statistic MMD on the g-and-k model",
        keys: &[
            key("theta", "3,1,0.1,0.1", "g-and-k parameters A,B,g,k"),
            key("n", "256", "simulated sample size"),
            key("m", "10000", "reference sample size"),
        ],
        run: run_ow_bench,
    },
    ExperimentSpec {
        id: "kqd-test",
        about: "permutation-test rejection rates, Gaussian vs Laplace or Gaussian vs Gaussian",
        keys: &[
            key("ns", "500,5000", "sample sizes per group"),
            key("alternative", "laplace", "laplace (moment matched) | gaussian (null holds)"),
            key("statistics", "ekqd,mmd_u", "comma list of ekqd, supkqd, ekqd_centered, mmd_v, mmd_u, mmd_lin, mmd_multi"),
            key("kernel", "polynomial", "polynomial | gaussian"),
            key("degree", "3", "polynomial degree, kernel (xy + 1)^degree"),
            key("lengthscale", "median", "Gaussian lengthscale, or 'median'"),
            key("p", "2", "KQD power"),
            key("alpha", "0.05", "test level"),
            key("permutations", "300", "permutations per test"),
        ],
        run: run_kqd_test,
    },
    ExperimentSpec {
        id: "cbq-demo",
        about: "CBQ vs KLSMC vs LSMC on the Bayesian linear-regression second moment",
        keys: &[
            key("d", "2", "parameter and weight dimension"),
            key("n", "50", "samples per parameter"),
            key("t", "50", "number of parameters"),
            key("test_points", "100", "held-out parameters for RMSE"),
            key("validation_points", "50", "parameters used to tune the baselines"),
        ],
        run: run_cbq_demo,
    },
];

pub fn find(id: &str) -> Option<&'static ExperimentSpec> {
    EXPERIMENTS.iter().find(|e| e.id == id)
}

impl ExperimentSpec {
    pub fn allowed_keys(&self) -> Vec<&'static str> {
        COMMON_KEYS.iter().chain(self.keys).map(|k| k.name).collect()
    }

    /// Usage text listing every key and its default.
    pub fn usage(&self) -> String {
        let mut s = format!("kdisc {} [--config PATH] [--seed U64] [--out PATH] [--reps N] [key=value]...\n", self.id);
        s.push_str(&format!("  {}\n\nkeys:\n", self.about));
        for k in COMMON_KEYS.iter().chain(self.keys) {
            s.push_str(&format!("  {:<20} {:<18} {}\n", k.name, k.default, k.help));
        }
        s
    }

    pub fn run(&self, cfg: &Config) -> CliResult<Report> {
        cfg.check_keys(&self.allowed_keys())?;
        let seed = cfg.get("seed", 0u64)?;
        (self.run)(cfg, seed)
    }
}

fn parse_process(cfg: &Config, default: &str) -> CliResult<Process> {
    let name = cfg.get_str("process").unwrap_or(default);
    let param = match cfg.get_str("hurst") {
        Some(_) => Some(cfg.get("hurst", 0.5)?),
        None if matches!(name, "fbm" | "ifbm" | "iifbm") => Some(0.5),
        None if name == "ou" => Some(1.0),
        None => None,
    };
    Ok(Process::parse(name, param)?)
}

fn parse_estimators(cfg: &Config) -> CliResult<Vec<ScaleEstimator>> {
    let names: Vec<String> = cfg.get_list("estimators", &["CV".to_string(), "ML".to_string()])?;
    names.iter().map(|s| Ok(ScaleEstimator::parse(s)?)).collect()
}

fn rate_rows(records: &[RateRecord], id: &'static str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["experiment".to_string()];
    header.extend(RateRecord::csv_header().iter().map(|s| s.to_string()));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![id.to_string()];
            row.extend(r.to_csv_row());
            row
        })
        .collect();
    (header, rows)
}

fn mean_by(records: &[RateRecord], est: ScaleEstimator, n: usize) -> f64 {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.estimator == est && r.n == n)
        .map(|r| r.tau2_hat)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Log-log slope of the replicate mean against `N`, per estimator.
pub fn rate_slopes(records: &[RateRecord], ns: &[usize], estimators: &[ScaleEstimator]) -> CliResult<Vec<f64>> {
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    estimators
        .iter()
        .map(|&e| {
            let y: Vec<f64> = ns.iter().map(|&n| mean_by(records, e, n)).collect();
            Ok(rate_slope(&x, &y)?)
        })
        .collect()
}

fn run_calib_rates(cfg: &Config, seed: u64) -> CliResult<Report> {
    let process = parse_process(cfg, "ifbm")?;
    let estimators = parse_estimators(cfg)?;
    let ns: Vec<usize> = cfg.get_list("ns", &[100, 1000, 10000])?;
    let t = cfg.get("t", 1.0)?;
    let reps = cfg.get("reps", 100usize)?;
    let records = rate_experiment(process, t, &ns, &estimators, reps, seed)?;
    let slopes = rate_slopes(&records, &ns, &estimators)?;
    let (header, rows) = rate_rows(&records, "calib-rates");
    Ok(Report {
        id: "calib-rates",
        header,
        rows,
        metric_name: format!("slope_{}", estimators[0]),
        metric: slopes[0],
        notes: estimators
            .iter()
            .zip(&slopes)
            .map(|(e, s)| format!("slope[{e}]={}", fmt_f64(*s)))
            .collect(),
    })
}

fn run_calib_limits(cfg: &Config, seed: u64) -> CliResult<Report> {
    let process = parse_process(cfg, "bm")?;
    let estimators = parse_estimators(cfg)?;
    let n = cfg.get("n", 10_000usize)?;
    let t = cfg.get("t", 1.0)?;
    let reps = cfg.get("reps", 100usize)?;
    let records = rate_experiment(process, t, &[n], &estimators, reps, seed)?;
    let means: Vec<f64> = estimators.iter().map(|&e| mean_by(&records, e, n)).collect();
    let (header, rows) = rate_rows(&records, "calib-limits");
    Ok(Report {
        id: "calib-limits",
        header,
        rows,
        metric_name: format!("mean_{}", estimators[0]),
        metric: means[0],
        notes: estimators
            .iter()
            .zip(&means)
            .map(|(e, m)| format!("mean[{e}]={}", fmt_f64(*m)))
            .collect(),
    })
}

fn parse_discrepancy(name: &str, n: usize) -> CliResult<Estimator> {
    Ok(match name.to_ascii_uppercase().as_str() {
        "V" => Estimator::V,
        "U" => Estimator::U,
        "LIN" => Estimator::Linear,
        "MULTI" => Estimator::Multi(log_budget(n).min(n - 1)),
        "EKQD" => Estimator::Ekqd,
        "SUPKQD" => Estimator::SupKqd,
        "EKQD_CENTERED" => Estimator::CenteredEkqd,
        _ => return Err(CliError::Usage(format!("unknown estimator '{name}'"))),
    })
}

/// `ceil(ln N)`, at least 1.
pub fn log_budget(n: usize) -> usize {
    ((n.max(2) as f64).ln().ceil() as usize).max(1)
}

fn parse_lengthscale(cfg: &Config) -> CliResult<Option<f64>> {
    match cfg.get_str("lengthscale") {
        None | Some("median") => Ok(None),
        Some(_) => Ok(Some(cfg.get("lengthscale", 1.0)?)),
    }
}

/// One estimator value on one replicate of the shifted-Gaussian problem.
pub fn discrepancy_value(estimator: Estimator, spec: &KernelSpec, x: &Points, y: &Points, seed: u64) -> CliResult<f64> {
    let (p, q) = (EmpiricalMeasure::uniform(x.clone()), EmpiricalMeasure::uniform(y.clone()));
    let n = x.len();
    let value = match estimator {
        Estimator::Ekqd | Estimator::SupKqd | Estimator::CenteredEkqd => {
            let cfg = KqdConfig::log_scaled(2, n, seed);
            let nu = kdisc::kqd::QuantileWeighting::Uniform;
            match estimator {
                Estimator::Ekqd => kdisc::kqd::ekqd_p(spec, &p, &q, &cfg, &nu)?,
                Estimator::SupKqd => kdisc::kqd::supkqd_p(spec, &p, &q, &cfg, &nu)?,
                _ => kdisc::kqd::ekqd_centered(spec, &p, &q, &cfg, &nu)?,
            }
        }
        e => estimate(spec, &p, &q, e)?.value,
    };
    Ok(value)
}

fn run_mmd_bench(cfg: &Config, seed: u64) -> CliResult<Report> {
    let names: Vec<String> = cfg.get_list(
        "estimators",
        &["V", "U", "LIN", "MULTI", "EKQD"].map(String::from),
    )?;
    let ns: Vec<usize> = cfg.get_list("ns", &[100, 1000])?;
    let d = cfg.get("d", 1usize)?;
    let shift = cfg.get("shift", 0.5)?;
    let fixed = parse_lengthscale(cfg)?;
    let reps = cfg.get("reps", 10usize)?;
    let root = RngStream::new(seed).split("mmd-bench");
    let mut rows = Vec::new();
    let mut timings = vec![0.0; names.len()];
    let mut last_mean = f64::NAN;
    for &n in &ns {
        if n < 2 {
            return Err(CliError::Usage(format!("sample size must be at least 2, got {n}")));
        }
        let ests = names.iter().map(|s| parse_discrepancy(s, n)).collect::<CliResult<Vec<_>>>()?;
        for r in 0..reps {
            let rep = root.split(&format!("N={n}")).split_indexed("rep", r);
            let x = gaussian_sample(n, d, &mut rep.split("P"));
            let mut y = gaussian_sample(n, d, &mut rep.split("Q"));
            y = y.map_rows(d, |row| row.iter().map(|v| v + shift).collect())?;
            let l = match fixed {
                Some(l) => l,
                None => median_heuristic(&x.concat(&y)?, rep.split("median").seed())?,
            };
            let spec = KernelSpec::gaussian(1.0, l)?;
            for (i, &e) in ests.iter().enumerate() {
                let start = Instant::now();
                let v = discrepancy_value(e, &spec, &x, &y, rep.split("statistic").seed())?;
                timings[i] += start.elapsed().as_secs_f64();
                if i == 0 && n == *ns.last().unwrap() {
                    last_mean = if r == 0 { v } else { last_mean + v };
                }
                rows.push(vec![
                    "mmd-bench".into(),
                    e.to_string(),
                    n.to_string(),
                    d.to_string(),
                    r.to_string(),
                    rep.seed().to_string(),
                    fmt_f64(l),
                    fmt_f64(v),
                ]);
            }
        }
    }
    Ok(Report {
        id: "mmd-bench",
        header: ["experiment", "estimator", "N", "d", "rep", "seed", "lengthscale", "value"]
            .map(String::from)
            .to_vec(),
        rows,
        metric_name: format!("mean_{}", names[0]),
        metric: last_mean / reps as f64,
        notes: names
            .iter()
            .zip(&timings)
            .map(|(n, t)| format!("seconds[{n}]={t:.3}"))
            .collect(),
    })
}

/// Errors of both estimators on one g-and-k replicate. The target is zero
/// because the reference sample comes from the same model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwRecord {
    pub rep: usize,
    pub seed: u64,
    pub v_stat: f64,
    pub ow: f64,
}

/// Relative nugget for the optimal-weight solve: the Gaussian Gram on a few
/// hundred nodes is numerically singular.
pub const OW_JITTER: [f64; 4] = [1e-10, 1e-8, 1e-6, 1e-4];

/// MMD^2 between `n` simulated g-and-k points (V-statistic or optimal
/// weights) and an independent `m`-point reference from the same model.
/// Kernel `k` uses the median heuristic on the reference; the base-space
/// kernel `c` uses it on the base draws.
pub fn ow_benchmark(theta: &GandK, n: usize, m: usize, reps: usize, seed: u64) -> CliResult<Vec<OwRecord>> {
    let root = RngStream::new(seed).split("ow-bench");
    let policy = JitterPolicy {
        relative_steps: OW_JITTER.to_vec(),
    };
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep = root.split_indexed("rep", r);
            let u = Points::from_scalars(&rep.split("base").normal(n));
            let x = Points::from_scalars(&gandk_generate(theta, u.as_slice()));
            let reference = gandk_sample(theta, m, &mut rep.split("reference"));
            let lk = median_heuristic(&reference, rep.split("median-k").seed())?;
            let lc = median_heuristic(&u, rep.split("median-c").seed())?;
            let k = KernelSpec::gaussian(1.0, lk)?;
            let emb_c = KernelEmbedding::new(KernelSpec::gaussian(1.0, lc)?, Measure::standard_gaussian(1))?;
            let w = ow_weights(&emb_c, &u, &policy)?;
            let q = EmpiricalMeasure::uniform(reference);
            let qq = kernel_mean_product(&k, &q, &q)?;
            let mmd2 = |p: &EmpiricalMeasure| -> kdisc::Result<f64> {
                Ok(kernel_mean_product(&k, p, p)? - 2.0 * kernel_mean_product(&k, p, &q)? + qq)
            };
            Ok(OwRecord {
                rep: r,
                seed: rep.seed(),
                v_stat: mmd2(&EmpiricalMeasure::uniform(x.clone()))?,
                ow: mmd2(&EmpiricalMeasure::weighted(x, w)?)?,
            })
        })
        .collect()
}

fn run_ow_bench(cfg: &Config, seed: u64) -> CliResult<Report> {
    let th: Vec<f64> = cfg.get_list("theta", &[3.0, 1.0, 0.1, 0.1])?;
    if th.len() != 4 {
        return Err(CliError::Usage(format!("theta needs 4 values, got {}", th.len())));
    }
    let theta = GandK::new(th[0], th[1], th[2], th[3])?;
    let n = cfg.get("n", 256usize)?;
    let m = cfg.get("m", 10_000usize)?;
    let reps = cfg.get("reps", 20usize)?;
    let recs = ow_benchmark(&theta, n, m, reps, seed)?;
    let mut rows = Vec::new();
    for r in &recs {
        for (name, v) in [("V", r.v_stat), ("OW", r.ow)] {
            rows.push(vec![
                "ow-bench".into(),
                name.into(),
                n.to_string(),
                m.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                fmt_f64(v),
                fmt_f64(v.abs()),
            ]);
        }
    }
    let mean_v = recs.iter().map(|r| r.v_stat.abs()).sum::<f64>() / reps as f64;
    let mean_ow = recs.iter().map(|r| r.ow.abs()).sum::<f64>() / reps as f64;
    Ok(Report {
        id: "ow-bench",
        header: ["experiment", "estimator", "N", "M", "rep", "seed", "mmd2", "abs_error"]
            .map(String::from)
            .to_vec(),
        rows,
        metric_name: "error_ratio_v_over_ow".into(),
        metric: mean_v / mean_ow,
        notes: vec![
            format!("mean_abs_error[V]={}", fmt_f64(mean_v)),
            format!("mean_abs_error[OW]={}", fmt_f64(mean_ow)),
        ],
    })
}

/// Kernel used by the power experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerKernel {
    Polynomial(u32),
    Gaussian(Option<f64>),
}

impl PowerKernel {
    fn choice(self) -> kdisc::Result<KernelChoice> {
        Ok(match self {
            PowerKernel::Polynomial(deg) => KernelChoice::Fixed(KernelSpec::polynomial(deg, 1.0, 1.0)?),
            PowerKernel::Gaussian(Some(l)) => KernelChoice::Fixed(KernelSpec::gaussian(1.0, l)?),
            PowerKernel::Gaussian(None) => KernelChoice::MedianHeuristic(KernelSpec::gaussian(1.0, 1.0)?),
        })
    }
}

/// Builds a test statistic by name for per-group size `n`.
pub fn make_statistic(name: &str, kernel: PowerKernel, p: u32, n: usize) -> CliResult<Box<dyn TwoSampleStatistic>> {
    let k = kernel.choice()?;
    let kqd = |kind| -> Box<dyn TwoSampleStatistic> { Box::new(KqdStatistic::new(kind, k, p, KqdBudget::LogN)) };
    let mmd = |kind| -> Box<dyn TwoSampleStatistic> { Box::new(MmdStatistic::new(kind, k)) };
    Ok(match name {
        "ekqd" => kqd(KqdKind::Expected),
        "supkqd" => kqd(KqdKind::Sup),
        "ekqd_centered" => kqd(KqdKind::Centered),
        "mmd_v" => mmd(MmdKind::V),
        "mmd_u" => mmd(MmdKind::U),
        "mmd_lin" => mmd(MmdKind::Linear),
        "mmd_multi" => mmd(MmdKind::Multi(log_budget(n).min(n.saturating_sub(1)).max(1))),
        _ => return Err(CliError::Usage(format!("unknown statistic '{name}'"))),
    })
}

/// Rejection rates of the named statistics with `P = N(0, 1)` and `Q` either
/// Laplace with unit variance or `N(0, 1)` again.
pub fn power_experiment(
    names: &[String],
    kernel: PowerKernel,
    p: u32,
    n: usize,
    laplace: bool,
    reps: usize,
    cfg: &TestConfig,
) -> CliResult<Vec<f64>> {
    let stats = names
        .iter()
        .map(|s| make_statistic(s, kernel, p, n))
        .collect::<CliResult<Vec<_>>>()?;
    let refs: Vec<&dyn TwoSampleStatistic> = stats.iter().map(|b| b.as_ref()).collect();
    let gauss = |rng: &mut RngStream, n: usize| gaussian_sample(n, 1, rng);
    let summary = if laplace {
        let lap = |rng: &mut RngStream, n: usize| laplace_sample(n, 0.5f64.sqrt(), rng);
        rejection_rates(&refs, gauss, lap, n, reps, cfg)?
    } else {
        rejection_rates(&refs, gauss, gauss, n, reps, cfg)?
    };
    Ok(summary.rates())
}

fn run_kqd_test(cfg: &Config, seed: u64) -> CliResult<Report> {
    let ns: Vec<usize> = cfg.get_list("ns", &[500, 5000])?;
    let laplace = match cfg.get_str("alternative").unwrap_or("laplace") {
        "laplace" => true,
        "gaussian" => false,
        other => return Err(CliError::Usage(format!("unknown alternative '{other}'"))),
    };
    let names: Vec<String> = cfg.get_list("statistics", &["ekqd".to_string(), "mmd_u".to_string()])?;
    let kernel = match cfg.get_str("kernel").unwrap_or("polynomial") {
        "polynomial" => PowerKernel::Polynomial(cfg.get("degree", 3u32)?),
        "gaussian" => PowerKernel::Gaussian(parse_lengthscale(cfg)?),
        other => return Err(CliError::Usage(format!("unknown kernel '{other}'"))),
    };
    let p = cfg.get("p", 2u32)?;
    let reps = cfg.get("reps", 50usize)?;
    let test = TestConfig::new(cfg.get("alpha", 0.05)?, cfg.get("permutations", 300usize)?, 0)?;
    let mut rows = Vec::new();
    let mut last = Vec::new();
    for &n in &ns {
        let run_seed = RngStream::new(seed).split(&format!("kqd-test/N={n}")).seed();
        let rates = power_experiment(&names, kernel, p, n, laplace, reps, &TestConfig { seed: run_seed, ..test })?;
        for (name, rate) in names.iter().zip(&rates) {
            rows.push(vec![
                "kqd-test".into(),
                name.clone(),
                n.to_string(),
                reps.to_string(),
                run_seed.to_string(),
                ((rate * reps as f64).round() as usize).to_string(),
                fmt_f64(*rate),
            ]);
        }
        last = rates;
    }
    Ok(Report {
        id: "kqd-test",
        header: ["experiment", "statistic", "N", "reps", "seed", "rejections", "rate"]
            .map(String::from)
            .to_vec(),
        rows,
        metric_name: format!("rate_{}", names[0]),
        metric: last[0],
        notes: names
            .iter()
            .zip(&last)
            .map(|(n, r)| format!("rate[{n}]={}", fmt_f64(*r)))
            .collect(),
    })
}

/// Test-set RMSE of the three methods on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct CbqComparison {
    pub rep: usize,
    pub seed: u64,
    pub cbq: f64,
    pub klsmc: f64,
    pub lsmc: f64,
    pub lsmc_degree: usize,
}

fn rmse(pred: impl Fn(&[f64]) -> kdisc::Result<f64>, thetas: &Points, truth: &[f64]) -> kdisc::Result<f64> {
    let mut acc = 0.0;
    for (th, t) in thetas.rows().zip(truth) {
        let e = pred(th)? - t;
        acc += e * e;
    }
    Ok((acc / truth.len() as f64).sqrt())
}

/// CBQ with empirical-Bayes hyperparameters against LSMC (degree 1 to 4)
/// and KLSMC (Matern-3/2 kernel ridge), both tuned on a validation set with
/// analytic targets. Parameters are uniform on `(1, 3)^d`.
pub fn cbq_comparison(
    d: usize,
    n: usize,
    t: usize,
    n_test: usize,
    n_val: usize,
    rep: usize,
    seed: u64,
) -> CliResult<CbqComparison> {
    let root = RngStream::new(seed).split("cbq-demo").split_indexed("rep", rep);
    let model = BayesLinearModel::generate(d, BAYES_LINEAR_OBSERVATIONS, 1.0, root.split("model").seed())?;
    let thetas = uniform_thetas(t, d, 1.0, 3.0, &mut root.split("thetas"));
    let test = uniform_thetas(n_test, d, 1.0, 3.0, &mut root.split("test"));
    let val = uniform_thetas(n_val, d, 1.0, 3.0, &mut root.split("validation"));
    let truth = |pts: &Points| pts.rows().map(|th| model.second_moment(th)).collect::<kdisc::Result<Vec<_>>>();
    let (truth_test, truth_val) = (truth(&test)?, truth(&val)?);
    let bl = bayes_linear_task(&model, &thetas, n, root.split("samples").seed())?;
    let grid = HyperGrid::standard();

    let opts = CbqOptions::default();
    let sel = empirical_bayes_grid(&bl.task, &grid, &opts)?;
    let fitted = bl.task.with_kernels(sel.kernel_x, sel.kernel_theta);
    let post = cbq_fit(&fitted, &opts.with_lambda_theta(sel.lambda_theta))?;
    let cbq = rmse(|th| Ok(cbq_predict(&post, th)?.mean), &test, &truth_test)?;

    let y = bl.task.mc_means();
    let mut best_lsmc: Option<(f64, usize)> = None;
    for degree in 1..=4 {
        let Ok(model) = lsmc_fit(&thetas, &y, degree) else { continue };
        let v = rmse(|th| model.predict(th), &val, &truth_val)?;
        if best_lsmc.is_none_or(|(b, _)| v < b) {
            best_lsmc = Some((v, degree));
        }
    }
    let (_, lsmc_degree) = best_lsmc.ok_or_else(|| Error::Empty("no LSMC degree could be fitted".into()))?;
    let lsmc_model = lsmc_fit(&thetas, &y, lsmc_degree)?;
    let lsmc = rmse(|th| lsmc_model.predict(th), &test, &truth_test)?;

    // standardized targets, as for CBQ
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64).sqrt().max(f64::MIN_POSITIVE);
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
    let mut best_k: Option<(f64, kdisc::cbq::KernelRidgeModel)> = None;
    for &a in &grid.amplitudes {
        for &l in &grid.lengthscales {
            for &lam in &grid.lambdas {
                let kernel = KernelSpec::matern(MaternOrder::ThreeHalves, a, l)?;
                let Ok(m) = klsmc_fit(&thetas, &ys, &kernel, lam) else { continue };
                let v = rmse(|th| Ok(mean + sd * m.predict(th)?), &val, &truth_val)?;
                if best_k.as_ref().is_none_or(|(b, _)| v < *b) {
                    best_k = Some((v, m));
                }
            }
        }
    }
    let (_, kmodel) = best_k.ok_or_else(|| Error::Empty("no KLSMC setting could be fitted".into()))?;
    let klsmc = rmse(|th| Ok(mean + sd * kmodel.predict(th)?), &test, &truth_test)?;
    Ok(CbqComparison {
        rep,
        seed: root.seed(),
        cbq,
        klsmc,
        lsmc,
        lsmc_degree,
    })
}

fn run_cbq_demo(cfg: &Config, seed: u64) -> CliResult<Report> {
    let d = cfg.get("d", 2usize)?;
    let n = cfg.get("n", 50usize)?;
    let t = cfg.get("t", 50usize)?;
    let n_test = cfg.get("test_points", 100usize)?;
    let n_val = cfg.get("validation_points", 50usize)?;
    let reps = cfg.get("reps", 10usize)?;
    let recs = (0..reps)
        .into_par_iter()
        .map(|r| cbq_comparison(d, n, t, n_test, n_val, r, seed))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    for r in &recs {
        for (name, v) in [("CBQ", r.cbq), ("KLSMC", r.klsmc), ("LSMC", r.lsmc)] {
            rows.push(vec![
                "cbq-demo".into(),
                name.into(),
                d.to_string(),
                n.to_string(),
                t.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                fmt_f64(v),
            ]);
        }
    }
    let mean = |f: fn(&CbqComparison) -> f64| recs.iter().map(f).sum::<f64>() / reps as f64;
    let (c, k, l) = (mean(|r| r.cbq), mean(|r| r.klsmc), mean(|r| r.lsmc));
    Ok(Report {
        id: "cbq-demo",
        header: ["experiment", "method", "d", "N", "T", "rep", "seed", "rmse"]
            .map(String::from)
            .to_vec(),
        rows,
        metric_name: "mean_rmse_CBQ".into(),
        metric: c,
        notes: vec![
            format!("mean_rmse[CBQ]={}", fmt_f64(c)),
            format!("mean_rmse[KLSMC]={}", fmt_f64(k)),
            format!("mean_rmse[LSMC]={}", fmt_f64(l)),
        ],
    })
}
