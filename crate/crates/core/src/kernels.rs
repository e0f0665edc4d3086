//! Stationary covariance kernels and exact joint GP sampling.

use std::fmt;

use faer::linalg::solvers::Llt;
use faer::{Col, Mat};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::SiteSet;
use crate::linalg::{cholesky_jittered, Matrix};
use crate::par;

pub const DEFAULT_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Matern32,
    SquaredExponential,
}

/// One stationary term `variance * g(r)`, with `r` the lengthscale-scaled
/// Euclidean distance between the selected feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub family: Family,
    pub variance: f64,
    /// One entry (isotropic) or one per active dimension (ARD).
    pub lengthscales: Vec<f64>,
    /// Feature columns the term reads; `None` means all of them.
    pub dims: Option<Vec<usize>>,
}

impl Component {
    fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let ls = |i: usize| {
            if self.lengthscales.len() == 1 {
                self.lengthscales[0]
            } else {
                self.lengthscales[i]
            }
        };
        let mut acc = 0.0;
        match &self.dims {
            Some(dims) => {
                for (i, &d) in dims.iter().enumerate() {
                    let t = (a[d] - b[d]) / ls(i);
                    acc += t * t;
                }
            }
            None => {
                for i in 0..a.len() {
                    let t = (a[i] - b[i]) / ls(i);
                    acc += t * t;
                }
            }
        }
        acc.sqrt()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.scaled_distance(a, b);
        match self.family {
            Family::Matern32 => {
                let s = 3f64.sqrt() * r;
                self.variance * (1.0 + s) * (-s).exp()
            }
            Family::SquaredExponential => self.variance * (-0.5 * r * r).exp(),
        }
    }

    fn validate(&self, feature_dim: usize) -> Result<()> {
        let active = self.dims.as_ref().map_or(feature_dim, |d| d.len());
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::InvalidParameter(format!("kernel variance {} must be >= 0", self.variance)));
        }
        if self.lengthscales.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidParameter("kernel lengthscales must be positive".into()));
        }
        if self.lengthscales.len() != 1 && self.lengthscales.len() != active {
            return Err(Error::InvalidParameter(format!(
                "{} lengthscales for {active} active dimensions",
                self.lengthscales.len()
            )));
        }
        if let Some(bad) = self.dims.iter().flatten().find(|&&d| d >= feature_dim) {
            return Err(Error::InvalidParameter(format!(
                "kernel reads feature column {bad} but only {feature_dim} exist"
            )));
        }
        Ok(())
    }
}

/// Sum of stationary components plus a diagonal jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub components: Vec<Component>,
    pub jitter: f64,
}

impl KernelSpec {
    fn single(family: Family, lengthscale: f64, variance: f64) -> Self {
        KernelSpec {
            components: vec![Component {
                family,
                variance,
                lengthscales: vec![lengthscale],
                dims: None,
            }],
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn matern32(lengthscale: f64, variance: f64) -> Self {
        Self::single(Family::Matern32, lengthscale, variance)
    }

    pub fn squared_exponential(lengthscale: f64, variance: f64) -> Self {
        Self::single(Family::SquaredExponential, lengthscale, variance)
    }

    /// Restricts every component to the given feature columns.
    pub fn on_dims(mut self, dims: &[usize]) -> Self {
        for c in &mut self.components {
            c.dims = Some(dims.to_vec());
        }
        self
    }

    /// Replaces the lengthscale of every component by per-dimension values.
    pub fn with_lengthscales(mut self, lengthscales: &[f64]) -> Self {
        for c in &mut self.components {
            c.lengthscales = lengthscales.to_vec();
        }
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn plus(mut self, other: KernelSpec) -> Self {
        self.components.extend(other.components);
        self
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.components.iter().map(|c| c.eval(a, b)).sum()
    }

    /// Prior variance at any point (the kernel is stationary).
    pub fn variance(&self) -> f64 {
        self.components.iter().map(|c| c.variance).sum()
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("kernel has no components".into()));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidParameter(format!("jitter {} must be >= 0", self.jitter)));
        }
        self.components.iter().try_for_each(|c| c.validate(feature_dim))
    }

    /// Gram matrix over the rows of `x`, without jitter.
    pub fn gram(&self, x: &Matrix) -> Mat<f64> {
        let n = x.rows();
        let rows = par::map_indices(n, |i| (0..=i).map(|j| self.eval(x.row(i), x.row(j))).collect::<Vec<_>>());
        let mut k = Mat::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `k(x_i, y_j)` for every row pair.
    pub fn cross(&self, x: &Matrix, y: &Matrix) -> Mat<f64> {
        let rows = par::map_indices(x.rows(), |i| (0..y.rows()).map(|j| self.eval(x.row(i), y.row(j))).collect::<Vec<_>>());
        Mat::from_fn(x.rows(), y.rows(), |i, j| rows[i][j])
    }

    /// Text form, e.g. `matern32(var=0.5;ls=0.5;dims=0,1) + matern32(var=1;ls=1;dims=2) | jitter=1e-12`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line: 0, msg };
        let (body, jitter) = match text.split_once('|') {
            Some((b, j)) => {
                let v = j.trim().strip_prefix("jitter=").ok_or_else(|| bad(format!("bad jitter clause {j:?}")))?;
                (b, v.trim().parse::<f64>().map_err(|e| bad(format!("jitter: {e}")))?)
            }
            None => (text, DEFAULT_JITTER),
        };
        let mut components = Vec::new();
        for term in body.split('+') {
            let term = term.trim();
            let (name, args) = term
                .strip_suffix(')')
                .and_then(|t| t.split_once('('))
                .ok_or_else(|| bad(format!("bad kernel term {term:?}")))?;
            let family = match name.trim() {
                "matern32" => Family::Matern32,
                "se" => Family::SquaredExponential,
                other => return Err(bad(format!("unknown kernel family {other:?}"))),
            };
            let mut c = Component {
                family,
                variance: 1.0,
                lengthscales: vec![1.0],
                dims: None,
            };
            for kv in args.split(';').filter(|s| !s.trim().is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad argument {kv:?}")))?;
                let floats = || -> Result<Vec<f64>> {
                    v.split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|e| bad(format!("{k}: {e}"))))
                        .collect()
                };
                match k.trim() {
                    "var" => c.variance = floats()?[0],
                    "ls" => c.lengthscales = floats()?,
                    "dims" => {
                        c.dims = Some(
                            v.split(',')
                                .map(|x| x.trim().parse::<usize>().map_err(|e| bad(format!("dims: {e}"))))
                                .collect::<Result<_>>()?,
                        )
                    }
                    other => return Err(bad(format!("unknown kernel argument {other:?}"))),
                }
            }
            components.push(c);
        }
        Ok(KernelSpec { components, jitter })
    }
}

fn join(v: &[impl fmt::Display]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            let name = match c.family {
                Family::Matern32 => "matern32",
                Family::SquaredExponential => "se",
            };
            write!(f, "{name}(var={};ls={}", c.variance, join(&c.lengthscales))?;
            if let Some(d) = &c.dims {
                write!(f, ";dims={}", join(d))?;
            }
            f.write_str(")")?;
        }
        write!(f, " | jitter={}", self.jitter)
    }
}

/// Cholesky factor of a kernel's Gram matrix, reusable for several
/// independent draws over the same points.
pub struct GpSampler {
    llt: Llt<f64>,
    jitter: f64,
}

impl GpSampler {
    pub fn new(x: &Matrix, kernel: &KernelSpec) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptySiteSet);
        }
        kernel.validate(x.cols())?;
        let (llt, jitter) = cholesky_jittered(kernel.gram(x), kernel.jitter)?;
        Ok(GpSampler { llt, jitter })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `L z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.len();
        let z = Col::from_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let draw = self.llt.L() * &z;
        (0..n).map(|i| draw[i]).collect()
    }
}

/// Exact joint draw of a zero-mean GP over the rows of `x`.
pub fn sample_gp_features<R: Rng + ?Sized>(x: &Matrix, kernel: &KernelSpec, rng: &mut R) -> Result<Vec<f64>> {
    Ok(GpSampler::new(x, kernel)?.sample(rng))
}

/// Exact joint draw of a zero-mean GP at the given sites.
pub fn sample_gp<R: Rng + ?Sized>(sites: &SiteSet, kernel: &KernelSpec, rng: &mut R) -> Result<Vec<f64>> {
    let x = Matrix::new(sites.len(), sites.dim(), sites.coords().to_vec())?;
    sample_gp_features(&x, kernel, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_forms() {
        let m = KernelSpec::matern32(0.3, 1.0);
        let r: f64 = 0.2;
        let s = 3f64.sqrt() * r / 0.3;
        assert!((m.eval(&[0.0, 0.0], &[0.2, 0.0]) - (1.0 + s) * (-s).exp()).abs() < 1e-15);
        let se = KernelSpec::squared_exponential(0.5, 0.5);
        let expected = 0.5 * (-(0.25 + 0.09) / (2.0 * 0.25f64)).exp();
        assert!((se.eval(&[0.0, 0.0], &[0.5, 0.3]) - expected).abs() < 1e-15);
        assert_eq!(m.eval(&[1.0, 2.0], &[1.0, 2.0]), 1.0);
    }

    #[test]
    fn active_dims_and_ard() {
        let k = KernelSpec::matern32(0.5, 0.5)
            .on_dims(&[0, 1])
            .plus(KernelSpec::matern32(1.0, 1.0).on_dims(&[2]));
        // Differences only in the third column touch the second term only.
        let v = k.eval(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]);
        let s = 3f64.sqrt();
        assert!((v - (0.5 + (1.0 + s) * (-s).exp())).abs() < 1e-15);
        assert_eq!(k.variance(), 1.5);
        let ard = KernelSpec::squared_exponential(1.0, 1.0).with_lengthscales(&[1.0, 2.0]);
        assert!((ard.eval(&[0.0, 0.0], &[0.0, 2.0]) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(k.validate(2).is_err());
        assert!(k.validate(3).is_ok());
    }

    #[test]
    fn text_round_trip() {
        let k = KernelSpec::matern32(0.5, 0.5)
            .on_dims(&[0, 1])
            .plus(KernelSpec::squared_exponential(1.0, 1.0).with_lengthscales(&[0.3, 0.7]).on_dims(&[2, 3]))
            .with_jitter(1e-10);
        assert_eq!(KernelSpec::parse(&k.to_text()).unwrap(), k);
        assert!(KernelSpec::parse("cubic(var=1)").is_err());
    }

    #[test]
    fn single_site_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let site = SiteSet::from_points(Metric::euclidean(2), &[[0.1, 0.2]]).unwrap();
        let kernel = KernelSpec::matern32(0.3, 2.5);
        let x = Matrix::new(1, 2, site.coords().to_vec()).unwrap();
        let sampler = GpSampler::new(&x, &kernel).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| sampler.sample(&mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var / 2.5 - 1.0).abs() < 0.05, "{var}");
        assert!(sample_gp(&site, &kernel, &mut rng).unwrap().len() == 1);
    }

    #[test]
    fn degenerate_and_coincident() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sites = SiteSet::from_points(Metric::euclidean(2), &[[0.0, 0.0], [0.5, 0.5]]).unwrap();
        let zero = sample_gp(&sites, &KernelSpec::matern32(0.3, 0.0), &mut rng).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-5));
        let twin = SiteSet::from_points(Metric::euclidean(2), &[[0.2, 0.2], [0.2, 0.2]]).unwrap();
        let d = sample_gp(&twin, &KernelSpec::squared_exponential(0.3, 1.0), &mut rng).unwrap();
        assert!((d[0] - d[1]).abs() < 1e-4);
    }

    #[test]
    fn well_separated_sites_factor_with_small_jitter() {
        let sites = SiteSet::regular_grid(12, -0.5, 0.5, 2).unwrap();
        let x = Matrix::new(sites.len(), 2, sites.coords().to_vec()).unwrap();
        for k in [KernelSpec::matern32(0.3, 1.0), KernelSpec::squared_exponential(0.05, 1.0)] {
            assert!(GpSampler::new(&x, &k).unwrap().jitter() <= 1e-10);
        }
    }
}
