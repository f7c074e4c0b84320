//! Kernel families, Gram matrices and the median-heuristic lengthscale.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::points::{dot, sq_dist, Points};
use crate::rng::RngStream;

/// Half-integer Matérn orders with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternOrder {
    pub fn nu(self) -> f64 {
        match self {
            MaternOrder::Half => 0.5,
            MaternOrder::ThreeHalves => 1.5,
            MaternOrder::FiveHalves => 2.5,
        }
    }

    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            x if x == 0.5 => Ok(MaternOrder::Half),
            x if x == 1.5 => Ok(MaternOrder::ThreeHalves),
            x if x == 2.5 => Ok(MaternOrder::FiveHalves),
            other => Err(Error::InvalidParameter(format!(
                "Matérn order must be 0.5, 1.5 or 2.5, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Gaussian,
    Matern(MaternOrder),
    Brownian,
    Fbm { hurst: f64 },
    Ifbm { hurst: f64 },
    Polynomial { degree: u32, offset: f64 },
    Linear,
    OrnsteinUhlenbeck { rate: f64 },
}

impl KernelFamily {
    /// Families defined on scalar inputs `x >= 0` only.
    pub fn is_brownian_like(&self) -> bool {
        matches!(
            self,
            KernelFamily::Brownian
                | KernelFamily::Fbm { .. }
                | KernelFamily::Ifbm { .. }
                | KernelFamily::OrnsteinUhlenbeck { .. }
        )
    }

    pub fn uses_lengthscale(&self) -> bool {
        matches!(self, KernelFamily::Gaussian | KernelFamily::Matern(_))
    }

    fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern(_) => "matern",
            KernelFamily::Brownian => "brownian",
            KernelFamily::Fbm { .. } => "fbm",
            KernelFamily::Ifbm { .. } => "ifbm",
            KernelFamily::Polynomial { .. } => "polynomial",
            KernelFamily::Linear => "linear",
            KernelFamily::OrnsteinUhlenbeck { .. } => "ou",
        }
    }
}

/// A parametric kernel: family, amplitude `tau2` and lengthscale.
///
/// The lengthscale is only read by the Gaussian and Matérn families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub amplitude: f64,
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, amplitude: f64, lengthscale: f64) -> Result<Self> {
        let spec = Self {
            family,
            amplitude,
            lengthscale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(amplitude: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, amplitude, lengthscale)
    }

    pub fn matern(order: MaternOrder, amplitude: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern(order), amplitude, lengthscale)
    }

    pub fn brownian(amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Brownian, amplitude, 1.0)
    }

    pub fn fbm(hurst: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Fbm { hurst }, amplitude, 1.0)
    }

    pub fn ifbm(hurst: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Ifbm { hurst }, amplitude, 1.0)
    }

    pub fn polynomial(degree: u32, offset: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Polynomial { degree, offset }, amplitude, 1.0)
    }

    pub fn linear(amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Linear, amplitude, 1.0)
    }

    pub fn ornstein_uhlenbeck(rate: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::OrnsteinUhlenbeck { rate }, amplitude, 1.0)
    }

    pub fn with_amplitude(self, amplitude: f64) -> Result<Self> {
        Self::new(self.family, amplitude, self.lengthscale)
    }

    pub fn with_lengthscale(self, lengthscale: f64) -> Result<Self> {
        Self::new(self.family, self.amplitude, lengthscale)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be positive, got {}", self.amplitude));
        }
        if self.family.uses_lengthscale()
            && !(self.lengthscale > 0.0 && self.lengthscale.is_finite())
        {
            return bad(format!("lengthscale must be positive, got {}", self.lengthscale));
        }
        match self.family {
            KernelFamily::Fbm { hurst } | KernelFamily::Ifbm { hurst }
                if !(hurst > 0.0 && hurst < 1.0) =>
            {
                bad(format!("Hurst parameter must lie in (0, 1), got {hurst}"))
            }
            KernelFamily::Polynomial { offset, .. } if !(offset >= 0.0) => {
                bad(format!("polynomial offset must be non-negative, got {offset}"))
            }
            KernelFamily::OrnsteinUhlenbeck { rate } if !(rate > 0.0) => {
                bad(format!("OU rate must be positive, got {rate}"))
            }
            _ => Ok(()),
        }
    }

    /// Checks that a point is in the kernel's domain.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if self.family.is_brownian_like() {
            if x.len() != 1 {
                return Err(Error::Shape(format!(
                    "{} kernel takes scalar inputs, got dimension {}",
                    self.family.name(),
                    x.len()
                )));
            }
            if !(x[0] >= 0.0) {
                return Err(Error::Domain(format!(
                    "{} kernel is defined on [0, inf), got {}",
                    self.family.name(),
                    x[0]
                )));
            }
        }
        Ok(())
    }

    pub fn check_points(&self, points: &Points) -> Result<()> {
        points.rows().try_for_each(|x| self.check_point(x))
    }

    /// `k(x, y)`, validating both inputs.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!(
                "kernel inputs have dimensions {} and {}",
                x.len(),
                y.len()
            )));
        }
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `k(x, y)` for inputs already known to lie in the domain.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        // amplitude applied last so that scaling it is exact
        self.amplitude * self.eval_unit(x, y)
    }

    fn eval_unit(&self, x: &[f64], y: &[f64]) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::Gaussian => (-sq_dist(x, y) / (2.0 * l * l)).exp(),
            KernelFamily::Matern(order) => {
                let rho = sq_dist(x, y).sqrt();
                match order {
                    MaternOrder::Half => (-rho / l).exp(),
                    MaternOrder::ThreeHalves => {
                        let a = 3f64.sqrt() * rho / l;
                        (1.0 + a) * (-a).exp()
                    }
                    MaternOrder::FiveHalves => {
                        let a = 5f64.sqrt() * rho / l;
                        (1.0 + a + 5.0 * rho * rho / (3.0 * l * l)) * (-a).exp()
                    }
                }
            }
            KernelFamily::Brownian => x[0].min(y[0]),
            KernelFamily::Fbm { hurst } => {
                let e = 2.0 * hurst;
                (x[0].powf(e) + y[0].powf(e) - (x[0] - y[0]).abs().powf(e)) / 2.0
            }
            KernelFamily::Ifbm { hurst } => ifbm_unit(x[0], y[0], hurst),
            KernelFamily::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
            KernelFamily::Linear => dot(x, y),
            KernelFamily::OrnsteinUhlenbeck { rate } => {
                ((-rate * (x[0] - y[0]).abs()).exp() - (-rate * (x[0] + y[0])).exp()) / 4.0
            }
        }
    }

    /// Explicit finite feature map with `k(x, y) = <phi(x), phi(y)>`, when one
    /// is cheap: the linear kernel in any dimension and polynomial kernels on
    /// scalar inputs.
    pub fn feature_map(&self, x: &[f64]) -> Option<Vec<f64>> {
        let s = self.amplitude.sqrt();
        match self.family {
            KernelFamily::Linear => Some(x.iter().map(|v| s * v).collect()),
            KernelFamily::Polynomial { degree, offset } if x.len() == 1 => {
                // (xy + c)^q = sum_j C(q, j) c^(q-j) (xy)^j
                let q = degree;
                let mut out = Vec::with_capacity(q as usize + 1);
                let mut binom = 1.0;
                for j in 0..=q {
                    if j > 0 {
                        binom = binom * f64::from(q - j + 1) / f64::from(j);
                    }
                    let coef = binom * offset.powi((q - j) as i32);
                    out.push(s * coef.sqrt() * x[0].powi(j as i32));
                }
                Some(out)
            }
            _ => None,
        }
    }

    pub fn has_feature_map(&self, dim: usize) -> bool {
        match self.family {
            KernelFamily::Linear => true,
            KernelFamily::Polynomial { .. } => dim == 1,
            _ => false,
        }
    }

    /// Flat key-value form: `family, tau2, lengthscale, nu, hurst, degree, offset, lambda`.
    pub fn to_config(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("family".into(), self.family.name().into());
        map.insert("tau2".into(), self.amplitude.to_string());
        if self.family.uses_lengthscale() {
            map.insert("lengthscale".into(), self.lengthscale.to_string());
        }
        match self.family {
            KernelFamily::Matern(order) => {
                map.insert("nu".into(), order.nu().to_string());
            }
            KernelFamily::Fbm { hurst } | KernelFamily::Ifbm { hurst } => {
                map.insert("hurst".into(), hurst.to_string());
            }
            KernelFamily::Polynomial { degree, offset } => {
                map.insert("degree".into(), degree.to_string());
                map.insert("offset".into(), offset.to_string());
            }
            KernelFamily::OrnsteinUhlenbeck { rate } => {
                map.insert("lambda".into(), rate.to_string());
            }
            _ => {}
        }
        map
    }

    /// Parses the key-value form written by [`KernelSpec::to_config`].
    /// Missing `tau2` defaults to 1 and missing `lengthscale` to 1.
    pub fn from_config(map: &BTreeMap<String, String>) -> Result<Self> {
        const KEYS: [&str; 8] = [
            "family",
            "tau2",
            "lengthscale",
            "nu",
            "hurst",
            "degree",
            "offset",
            "lambda",
        ];
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("unknown kernel key '{k}'")));
        }
        let num = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidParameter(format!("kernel key '{key}': cannot parse '{v}'"))
                    })
                })
                .transpose()
        };
        let need = |key: &str| -> Result<f64> {
            num(key)?.ok_or_else(|| Error::InvalidParameter(format!("kernel key '{key}' is required")))
        };
        let family_name = map
            .get("family")
            .ok_or_else(|| Error::InvalidParameter("kernel key 'family' is required".into()))?;
        let family = match family_name.trim() {
            "gaussian" => KernelFamily::Gaussian,
            "matern" => KernelFamily::Matern(MaternOrder::from_nu(need("nu")?)?),
            "brownian" => KernelFamily::Brownian,
            "fbm" => KernelFamily::Fbm { hurst: need("hurst")? },
            "ifbm" => KernelFamily::Ifbm { hurst: need("hurst")? },
            "polynomial" => {
                let degree = need("degree")?;
                if degree < 0.0 || degree.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "polynomial degree must be a non-negative integer, got {degree}"
                    )));
                }
                KernelFamily::Polynomial {
                    degree: degree as u32,
                    offset: num("offset")?.unwrap_or(0.0),
                }
            }
            "linear" => KernelFamily::Linear,
            "ou" => KernelFamily::OrnsteinUhlenbeck { rate: need("lambda")? },
            other => {
                return Err(Error::InvalidParameter(format!("unknown kernel family '{other}'")))
            }
        };
        Self::new(
            family,
            num("tau2")?.unwrap_or(1.0),
            num("lengthscale")?.unwrap_or(1.0),
        )
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .to_config()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        f.write_str(&parts.join(";"))
    }
}

/// Integrated fBm kernel with unit amplitude, polynomial closed form.
fn ifbm_unit(x: f64, y: f64, hurst: f64) -> f64 {
    let a = 2.0 * hurst + 1.0;
    let b = 2.0 * hurst + 2.0;
    (y * x.powf(a) + x * y.powf(a) - (x.powf(b) + y.powf(b) - (x - y).abs().powf(b)) / b)
        / (2.0 * a)
}

/// A symmetric Gram matrix together with the kernel that produced it.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub spec: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Pairwise evaluations `k(x_i, x_j)`.
pub fn gram(spec: &KernelSpec, points: &Points) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::Empty("Gram matrix of zero points".into()));
    }
    spec.check_points(points)?;
    let n = points.len();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = points.row(i);
        for j in 0..=i {
            let v = spec.eval_unchecked(xi, points.row(j));
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        values,
        spec: *spec,
    })
}

/// Rectangular matrix `k(a_i, b_j)`.
pub fn cross_gram(spec: &KernelSpec, a: &Points, b: &Points) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "cross Gram between {}-d and {}-d points",
            a.dim(),
            b.dim()
        )));
    }
    spec.check_points(a)?;
    spec.check_points(b)?;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        spec.eval_unchecked(a.row(i), b.row(j))
    }))
}

/// Vector `k(x, p_i)` over the rows of `points`.
pub fn kernel_vector(spec: &KernelSpec, x: &[f64], points: &Points) -> Result<Vec<f64>> {
    if x.len() != points.dim() {
        return Err(Error::Shape(format!(
            "query of dimension {} against {}-d points",
            x.len(),
            points.dim()
        )));
    }
    spec.check_point(x)?;
    spec.check_points(points)?;
    Ok(points.rows().map(|p| spec.eval_unchecked(x, p)).collect())
}

/// Largest pooled sample on which all pairs are enumerated.
pub const MEDIAN_HEURISTIC_MAX_POINTS: usize = 1000;

/// Median of pairwise Euclidean distances over pairs `n < n'`.
///
/// Samples larger than [`MEDIAN_HEURISTIC_MAX_POINTS`] are first subsampled
/// without replacement using a stream derived from `seed`.
pub fn median_heuristic(points: &Points, seed: u64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Empty(
            "median heuristic needs at least two points".into(),
        ));
    }
    let sub;
    let pts = if points.len() > MEDIAN_HEURISTIC_MAX_POINTS {
        let mut rng = RngStream::new(seed).split("median-heuristic");
        let perm = rng.permutation(points.len());
        sub = points.select(&perm[..MEDIAN_HEURISTIC_MAX_POINTS]);
        &sub
    } else {
        points
    };
    let n = pts.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(pts.row(i), pts.row(j)).sqrt());
        }
    }
    let median = median_of(&mut dists);
    if !(median > 0.0) {
        return Err(Error::Domain(
            "median pairwise distance is zero; the lengthscale would be degenerate".into(),
        ));
    }
    Ok(median)
}

pub(crate) fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}
