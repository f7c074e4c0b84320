//! Permutation two-sample tests and rejection-rate loops.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{gram, median_heuristic, KernelSpec};
use crate::kqd::{direction_term, sample_directions, KqdConfig, QuantileWeighting, ReferenceRule};
use crate::mmd::{mmd2_linear, mmd2_multi, EmpiricalMeasure};
use crate::points::Points;
use crate::rng::RngStream;

/// A statistic evaluated on many relabelings of one pooled sample.
pub trait TwoSampleStatistic: Send + Sync {
    fn name(&self) -> String;

    /// Precomputes whatever depends only on the pooled sample. `seed` drives
    /// any randomness inside the statistic and is fixed for the whole test.
    fn prepare(&self, pooled: &Points, n_x: usize, seed: u64) -> Result<Box<dyn PreparedStatistic>>;
}

pub trait PreparedStatistic: Send + Sync {
    /// Value on the split given by row indices into the pooled sample.
    fn evaluate(&self, x_idx: &[usize], y_idx: &[usize]) -> Result<f64>;
}

/// Wraps a closure `(x, y, seed) -> value`.
pub struct FnStatistic<F> {
    name: String,
    f: F,
}

impl<F> FnStatistic<F>
where
    F: Fn(&Points, &Points, u64) -> Result<f64> + Send + Sync + Clone + 'static,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

struct PreparedFn<F> {
    pooled: Points,
    seed: u64,
    f: F,
}

impl<F> PreparedStatistic for PreparedFn<F>
where
    F: Fn(&Points, &Points, u64) -> Result<f64> + Send + Sync,
{
    fn evaluate(&self, x_idx: &[usize], y_idx: &[usize]) -> Result<f64> {
        (self.f)(&self.pooled.select(x_idx), &self.pooled.select(y_idx), self.seed)
    }
}

impl<F> TwoSampleStatistic for FnStatistic<F>
where
    F: Fn(&Points, &Points, u64) -> Result<f64> + Send + Sync + Clone + 'static,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn prepare(&self, pooled: &Points, _n_x: usize, seed: u64) -> Result<Box<dyn PreparedStatistic>> {
        Ok(Box::new(PreparedFn {
            pooled: pooled.clone(),
            seed,
            f: self.f.clone(),
        }))
    }
}

/// Fixed kernel, or the given kernel with its lengthscale reset by the median
/// heuristic on the pooled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Fixed(KernelSpec),
    MedianHeuristic(KernelSpec),
}

impl KernelChoice {
    fn resolve(&self, pooled: &Points, seed: u64) -> Result<KernelSpec> {
        match self {
            KernelChoice::Fixed(k) => Ok(*k),
            KernelChoice::MedianHeuristic(k) => k.with_lengthscale(median_heuristic(pooled, seed)?),
        }
    }

    fn label(&self) -> String {
        match self {
            KernelChoice::Fixed(k) => k.to_string(),
            KernelChoice::MedianHeuristic(k) => format!("{k} (median heuristic)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdKind {
    V,
    U,
    /// Equal-size U-statistic that also drops paired cross terms.
    UPaired,
    Linear,
    Multi(usize),
}

/// MMD estimators as test statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdStatistic {
    pub kind: MmdKind,
    pub kernel: KernelChoice,
}

impl MmdStatistic {
    pub fn new(kind: MmdKind, kernel: KernelChoice) -> Self {
        Self { kind, kernel }
    }
}

/// Largest pooled sample for which the Gram matrix is cached.
const GRAM_CACHE_MAX: usize = 4000;

/// Block sums of the pooled kernel matrix, from whichever representation is
/// cheapest.
enum KernelSums {
    Features { phi: Vec<Vec<f64>>, diag: Vec<f64> },
    Gram { g: DMatrix<f64>, total: f64 },
    Direct { pooled: Points, spec: KernelSpec },
}

impl KernelSums {
    fn new(spec: &KernelSpec, pooled: &Points) -> Result<Self> {
        spec.check_points(pooled)?;
        if spec.has_feature_map(pooled.dim()) {
            let phi: Vec<Vec<f64>> = pooled.rows().map(|r| spec.feature_map(r).unwrap()).collect();
            let diag = pooled.rows().map(|r| spec.eval_unchecked(r, r)).collect();
            return Ok(KernelSums::Features { phi, diag });
        }
        if pooled.len() <= GRAM_CACHE_MAX {
            let g = gram(spec, pooled)?.into_inner();
            let total = g.iter().sum();
            return Ok(KernelSums::Gram { g, total });
        }
        Ok(KernelSums::Direct {
            pooled: pooled.clone(),
            spec: *spec,
        })
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        match self {
            KernelSums::Features { phi, .. } => phi[i].iter().zip(&phi[j]).map(|(a, b)| a * b).sum(),
            KernelSums::Gram { g, .. } => g[(i, j)],
            KernelSums::Direct { pooled, spec } => spec.eval_unchecked(pooled.row(i), pooled.row(j)),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            KernelSums::Features { diag, .. } => diag[i],
            _ => self.k(i, i),
        }
    }

    /// Sum over `i, j` in `a` of `k(z_i, z_j)`, diagonal included.
    fn block(&self, a: &[usize]) -> f64 {
        match self {
            KernelSums::Features { phi, .. } => {
                let s = self.feature_sum(phi, a);
                s.iter().map(|v| v * v).sum()
            }
            _ => {
                let mut acc = 0.0;
                for (t, &i) in a.iter().enumerate() {
                    let mut row = 0.0;
                    for &j in &a[..t] {
                        row += self.k(i, j);
                    }
                    acc += 2.0 * row + self.diag(i);
                }
                acc
            }
        }
    }

    fn feature_sum(&self, phi: &[Vec<f64>], a: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; phi[0].len()];
        for &i in a {
            for (acc, v) in s.iter_mut().zip(&phi[i]) {
                *acc += v;
            }
        }
        s
    }

    /// `(xx, yy, xy)` block sums, diagonals included.
    fn sums(&self, x: &[usize], y: &[usize]) -> (f64, f64, f64) {
        match self {
            KernelSums::Features { phi, .. } => {
                let sx = self.feature_sum(phi, x);
                let sy = self.feature_sum(phi, y);
                let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                (d(&sx, &sx), d(&sy, &sy), d(&sx, &sy))
            }
            KernelSums::Gram { total, .. } if x.len() + y.len() == self.n() => {
                // the two blocks partition the pooled sample
                let (xx, yy) = (self.block(x), self.block(y));
                (xx, yy, 0.5 * (total - xx - yy))
            }
            _ => {
                let mut xy = 0.0;
                for &i in x {
                    for &j in y {
                        xy += self.k(i, j);
                    }
                }
                (self.block(x), self.block(y), xy)
            }
        }
    }

    fn n(&self) -> usize {
        match self {
            KernelSums::Features { diag, .. } => diag.len(),
            KernelSums::Gram { g, .. } => g.nrows(),
            KernelSums::Direct { pooled, .. } => pooled.len(),
        }
    }

    fn v(&self, x: &[usize], y: &[usize]) -> f64 {
        let (xx, yy, xy) = self.sums(x, y);
        let (n, m) = (x.len() as f64, y.len() as f64);
        xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)
    }

    fn u(&self, x: &[usize], y: &[usize]) -> f64 {
        let (xx, yy, xy) = self.sums(x, y);
        let dx: f64 = x.iter().map(|&i| self.diag(i)).sum();
        let dy: f64 = y.iter().map(|&i| self.diag(i)).sum();
        let (n, m) = (x.len() as f64, y.len() as f64);
        (xx - dx) / (n * (n - 1.0)) + (yy - dy) / (m * (m - 1.0)) - 2.0 * xy / (n * m)
    }

    fn u_paired(&self, x: &[usize], y: &[usize]) -> f64 {
        let (xx, yy, xy) = self.sums(x, y);
        let diag: f64 = x
            .iter()
            .zip(y)
            .map(|(&i, &j)| self.diag(i) + self.diag(j) - 2.0 * self.k(i, j))
            .sum();
        let n = x.len() as f64;
        (xx + yy - 2.0 * xy - diag) / (n * (n - 1.0))
    }
}

struct PreparedMmd {
    kind: MmdKind,
    spec: KernelSpec,
    pooled: Points,
    sums: Option<KernelSums>,
}

impl PreparedStatistic for PreparedMmd {
    fn evaluate(&self, x_idx: &[usize], y_idx: &[usize]) -> Result<f64> {
        let need_pairs = || -> Result<()> {
            if x_idx.len() != y_idx.len() || x_idx.len() < 2 {
                return Err(Error::Shape(format!(
                    "statistic needs equal sizes of at least 2, got {} and {}",
                    x_idx.len(),
                    y_idx.len()
                )));
            }
            Ok(())
        };
        match self.kind {
            MmdKind::V => Ok(self.sums.as_ref().unwrap().v(x_idx, y_idx)),
            MmdKind::U => {
                if x_idx.len() < 2 || y_idx.len() < 2 {
                    return Err(Error::Empty("U-statistic needs two points per sample".into()));
                }
                Ok(self.sums.as_ref().unwrap().u(x_idx, y_idx))
            }
            MmdKind::UPaired => {
                need_pairs()?;
                Ok(self.sums.as_ref().unwrap().u_paired(x_idx, y_idx))
            }
            MmdKind::Linear => mmd2_linear(
                &self.spec,
                &EmpiricalMeasure::uniform(self.pooled.select(x_idx)),
                &EmpiricalMeasure::uniform(self.pooled.select(y_idx)),
            ),
            MmdKind::Multi(r) => mmd2_multi(
                &self.spec,
                &EmpiricalMeasure::uniform(self.pooled.select(x_idx)),
                &EmpiricalMeasure::uniform(self.pooled.select(y_idx)),
                r,
            ),
        }
    }
}

impl TwoSampleStatistic for MmdStatistic {
    fn name(&self) -> String {
        let kind = match self.kind {
            MmdKind::V => "mmd_v".to_string(),
            MmdKind::U => "mmd_u".to_string(),
            MmdKind::UPaired => "mmd_u_paired".to_string(),
            MmdKind::Linear => "mmd_lin".to_string(),
            MmdKind::Multi(r) => format!("mmd_multi_r{r}"),
        };
        format!("{kind} [{}]", self.kernel.label())
    }

    fn prepare(&self, pooled: &Points, _n_x: usize, seed: u64) -> Result<Box<dyn PreparedStatistic>> {
        let spec = self.kernel.resolve(pooled, seed)?;
        let sums = match self.kind {
            MmdKind::V | MmdKind::U | MmdKind::UPaired => Some(KernelSums::new(&spec, pooled)?),
            _ => None,
        };
        Ok(Box::new(PreparedMmd {
            kind: self.kind,
            spec,
            pooled: pooled.clone(),
            sums,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KqdKind {
    Expected,
    Sup,
    Centered,
}

/// Direction and anchor counts: fixed, or `ceil(log N)` of the per-sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KqdBudget {
    Fixed { l: usize, m: usize },
    LogN,
}

/// e-KQD, sup-KQD and centered e-KQD as test statistics. Directions are
/// drawn once per test from the pooled sample.
#[derive(Debug, Clone)]
pub struct KqdStatistic {
    pub kind: KqdKind,
    pub kernel: KernelChoice,
    pub p: u32,
    pub budget: KqdBudget,
    pub reference: ReferenceRule,
    pub nu: QuantileWeighting,
}

impl KqdStatistic {
    pub fn new(kind: KqdKind, kernel: KernelChoice, p: u32, budget: KqdBudget) -> Self {
        Self {
            kind,
            kernel,
            p,
            budget,
            reference: ReferenceRule::Pooled,
            nu: QuantileWeighting::Uniform,
        }
    }
}

struct PreparedKqd {
    kind: KqdKind,
    p: u32,
    nu: QuantileWeighting,
    /// `projections[l][i] = u_l(z_i)` over the pooled sample.
    projections: Vec<Vec<f64>>,
    sums: Option<KernelSums>,
}

impl PreparedStatistic for PreparedKqd {
    fn evaluate(&self, x_idx: &[usize], y_idx: &[usize]) -> Result<f64> {
        if x_idx.len() != y_idx.len() || x_idx.is_empty() {
            return Err(Error::Shape(format!(
                "KQD needs equal non-empty sizes, got {} and {}",
                x_idx.len(),
                y_idx.len()
            )));
        }
        let n = x_idx.len() as f64;
        let mut terms = Vec::with_capacity(self.projections.len());
        let mut gap_sq = 0.0;
        for proj in &self.projections {
            let mut ux: Vec<f64> = x_idx.iter().map(|&i| proj[i]).collect();
            let mut uy: Vec<f64> = y_idx.iter().map(|&i| proj[i]).collect();
            if self.kind == KqdKind::Centered {
                let gap = ux.iter().sum::<f64>() / n - uy.iter().sum::<f64>() / n;
                gap_sq += gap * gap;
            }
            terms.push(direction_term(&mut ux, &mut uy, self.p, &self.nu));
        }
        let l = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / l;
        Ok(match self.kind {
            KqdKind::Expected => mean,
            KqdKind::Sup => terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            KqdKind::Centered => {
                if x_idx.len() < 2 {
                    return Err(Error::Empty("centered e-KQD needs two points per sample".into()));
                }
                mean + self.sums.as_ref().unwrap().u_paired(x_idx, y_idx) - gap_sq / l
            }
        })
    }
}

impl TwoSampleStatistic for KqdStatistic {
    fn name(&self) -> String {
        let kind = match self.kind {
            KqdKind::Expected => "ekqd",
            KqdKind::Sup => "supkqd",
            KqdKind::Centered => "ekqd_centered",
        };
        format!("{kind}_p{} [{}]", self.p, self.kernel.label())
    }

    fn prepare(&self, pooled: &Points, n_x: usize, seed: u64) -> Result<Box<dyn PreparedStatistic>> {
        if self.kind == KqdKind::Centered && self.p != 2 {
            return Err(Error::InvalidParameter("centered e-KQD is defined for p = 2".into()));
        }
        let spec = self.kernel.resolve(pooled, seed)?;
        let cfg = match self.budget {
            KqdBudget::Fixed { l, m } => KqdConfig::new(self.p, l, m, seed),
            KqdBudget::LogN => KqdConfig::log_scaled(self.p, n_x, seed),
        }
        .with_reference(self.reference);
        let dirs = sample_directions(&spec, &cfg, pooled)?;
        let projections = dirs
            .par_iter()
            .map(|u| u.project(pooled))
            .collect::<Result<Vec<_>>>()?;
        let sums = if self.kind == KqdKind::Centered {
            Some(KernelSums::new(&spec, pooled)?)
        } else {
            None
        };
        Ok(Box::new(PreparedKqd {
            kind: self.kind,
            p: self.p,
            nu: self.nu.clone(),
            projections,
            sums,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
}

impl TestConfig {
    pub fn new(alpha: f64, permutations: usize, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {alpha}")));
        }
        if permutations < 1 {
            return Err(Error::InvalidParameter("at least one permutation is needed".into()));
        }
        Ok(Self {
            alpha,
            permutations,
            seed,
        })
    }

    /// Level 0.05 with 300 permutations.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            alpha: 0.05,
            permutations: 300,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub null_samples: Vec<f64>,
}

/// The `ceil((1 - alpha) B)`-th smallest null value.
pub fn null_threshold(null_samples: &[f64], alpha: f64) -> Result<f64> {
    if null_samples.is_empty() {
        return Err(Error::Empty("empty permutation null".into()));
    }
    let mut sorted = null_samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    // guard against 0.95 * 300 landing just above an integer
    let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil() as usize;
    Ok(sorted[k.clamp(1, b) - 1])
}

/// Permutation test of `P = Q`. Rejects when the observed statistic is
/// strictly above the threshold.
pub fn permutation_test(
    stat: &dyn TwoSampleStatistic,
    p: &Points,
    q: &Points,
    cfg: &TestConfig,
) -> Result<TestResult> {
    TestConfig::new(cfg.alpha, cfg.permutations, cfg.seed)?;
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("two-sample test needs non-empty samples".into()));
    }
    let pooled = p.concat(q)?;
    let (n, total) = (p.len(), pooled.len());
    let root = RngStream::new(cfg.seed);
    let prepared = stat
        .prepare(&pooled, n, root.split("statistic").seed())
        .map_err(|e| e.context(format!("preparing {}", stat.name())))?;
    let observed_x: Vec<usize> = (0..n).collect();
    let observed_y: Vec<usize> = (n..total).collect();
    let statistic = prepared
        .evaluate(&observed_x, &observed_y)
        .map_err(|e| e.context("observed split"))?;
    let perms = root.split("permutations");
    let null_samples = (0..cfg.permutations)
        .into_par_iter()
        .map(|b| {
            let perm = perms.split_indexed("perm", b).permutation(total);
            prepared
                .evaluate(&perm[..n], &perm[n..])
                .map_err(|e| e.context(format!("permutation {b}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = null_threshold(&null_samples, cfg.alpha)?;
    Ok(TestResult {
        statistic,
        threshold,
        reject: statistic > threshold,
        null_samples,
    })
}

/// Rejection counts of several statistics run on the same replicate data.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSummary {
    pub names: Vec<String>,
    pub rejections: Vec<usize>,
    pub reps: usize,
}

impl RejectionSummary {
    pub fn rates(&self) -> Vec<f64> {
        self.rejections
            .iter()
            .map(|&r| r as f64 / self.reps as f64)
            .collect()
    }
}

/// Runs `reps` tests for each statistic. Replicate `r` draws both samples
/// from streams split off `cfg.seed`, and every statistic sees the same data.
pub fn rejection_rates<GP, GQ>(
    stats: &[&dyn TwoSampleStatistic],
    gen_p: GP,
    gen_q: GQ,
    n: usize,
    reps: usize,
    cfg: &TestConfig,
) -> Result<RejectionSummary>
where
    GP: Fn(&mut RngStream, usize) -> Points + Sync,
    GQ: Fn(&mut RngStream, usize) -> Points + Sync,
{
    let root = RngStream::new(cfg.seed).split("rejection-rate");
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep = root.split_indexed("rep", r);
            let x = gen_p(&mut rep.split("P"), n);
            let y = gen_q(&mut rep.split("Q"), n);
            let test_cfg = TestConfig {
                seed: rep.split("test").seed(),
                ..*cfg
            };
            stats
                .iter()
                .map(|s| permutation_test(*s, &x, &y, &test_cfg).map(|t| t.reject))
                .collect::<Result<Vec<bool>>>()
                .map_err(|e| e.context(format!("replicate {r}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rejections = vec![0; stats.len()];
    for row in &per_rep {
        for (c, &rej) in rejections.iter_mut().zip(row) {
            *c += rej as usize;
        }
    }
    Ok(RejectionSummary {
        names: stats.iter().map(|s| s.name()).collect(),
        rejections,
        reps,
    })
}

/// Fraction of `reps` tests that reject.
pub fn rejection_rate<GP, GQ>(
    stat: &dyn TwoSampleStatistic,
    gen_p: GP,
    gen_q: GQ,
    n: usize,
    reps: usize,
    cfg: &TestConfig,
) -> Result<f64>
where
    GP: Fn(&mut RngStream, usize) -> Points + Sync,
    GQ: Fn(&mut RngStream, usize) -> Points + Sync,
{
    Ok(rejection_rates(&[stat], gen_p, gen_q, n, reps, cfg)?.rates()[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmd::{mmd2_u, mmd2_u_paired, mmd2_v};

    fn gauss() -> KernelSpec {
        KernelSpec::gaussian(1.0, 1.0).unwrap()
    }

    fn normal_gen(shift: f64) -> impl Fn(&mut RngStream, usize) -> Points + Sync {
        move |rng: &mut RngStream, n: usize| {
            Points::from_scalars(&rng.normal(n).into_iter().map(|v| v + shift).collect::<Vec<_>>())
        }
    }

    #[test]
    fn threshold_order_statistic() {
        let null: Vec<f64> = (1..=300).map(f64::from).collect();
        assert_eq!(null_threshold(&null, 0.05).unwrap(), 285.0);
        assert_eq!(null_threshold(&null, 0.5).unwrap(), 150.0);
        assert_eq!(null_threshold(&[3.0], 0.05).unwrap(), 3.0);
    }

    #[test]
    fn constant_statistic_never_rejects() {
        let s = FnStatistic::new("const", |_: &Points, _: &Points, _| Ok(1.0));
        let p = Points::from_scalars(&[0.0, 1.0]);
        let r = permutation_test(&s, &p, &p, &TestConfig::with_seed(0)).unwrap();
        assert_eq!(r.threshold, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn observed_infinity_rejects() {
        // only the observed ordering of x gets the spike
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = (10..20).map(f64::from).collect();
        let target = xs.clone();
        let s = FnStatistic::new("spike", move |x: &Points, _: &Points, _| {
            Ok(if x.as_slice() == target.as_slice() { f64::INFINITY } else { 0.0 })
        });
        let p = Points::from_scalars(&xs);
        let q = Points::from_scalars(&ys);
        let r = permutation_test(&s, &p, &q, &TestConfig::with_seed(1)).unwrap();
        assert!(r.reject);
    }

    #[test]
    fn prepared_mmd_matches_direct_estimators() {
        let mut rng = RngStream::new(3);
        let x = Points::from_scalars(&rng.normal(40));
        let y = Points::from_scalars(&rng.normal(40));
        let pooled = x.concat(&y).unwrap();
        let xi: Vec<usize> = (0..40).collect();
        let yi: Vec<usize> = (40..80).collect();
        let (px, py) = (EmpiricalMeasure::uniform(x), EmpiricalMeasure::uniform(y));
        for spec in [gauss(), KernelSpec::polynomial(3, 1.0, 1.0).unwrap()] {
            let choice = KernelChoice::Fixed(spec);
            for (kind, want) in [
                (MmdKind::V, mmd2_v(&spec, &px, &py).unwrap()),
                (MmdKind::U, mmd2_u(&spec, &px, &py).unwrap()),
                (MmdKind::UPaired, mmd2_u_paired(&spec, &px, &py).unwrap()),
            ] {
                let prep = MmdStatistic::new(kind, choice).prepare(&pooled, 40, 0).unwrap();
                let got = prep.evaluate(&xi, &yi).unwrap();
                assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()), "{kind:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn deterministic_results() {
        let mut rng = RngStream::new(4);
        let x = Points::from_scalars(&rng.normal(30));
        let y = Points::from_scalars(&rng.normal(30));
        let stat = KqdStatistic::new(KqdKind::Expected, KernelChoice::MedianHeuristic(gauss()), 2, KqdBudget::LogN);
        let cfg = TestConfig::new(0.05, 50, 9).unwrap();
        let a = permutation_test(&stat, &x, &y, &cfg).unwrap();
        let b = permutation_test(&stat, &x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separated_point_masses_always_rejected() {
        let stat = MmdStatistic::new(MmdKind::V, KernelChoice::Fixed(gauss()));
        let cfg = TestConfig::new(0.05, 100, 2).unwrap();
        let rate = rejection_rate(
            &stat,
            |_: &mut RngStream, n| Points::from_scalars(&vec![0.0; n]),
            |_: &mut RngStream, n| Points::from_scalars(&vec![5.0; n]),
            20,
            10,
            &cfg,
        )
        .unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn shifted_gaussians_detected() {
        let stat = MmdStatistic::new(MmdKind::U, KernelChoice::MedianHeuristic(gauss()));
        let cfg = TestConfig::new(0.05, 100, 5).unwrap();
        let rate = rejection_rate(&stat, normal_gen(0.0), normal_gen(1.0), 50, 20, &cfg).unwrap();
        assert!(rate >= 0.9, "{rate}");
    }
}
