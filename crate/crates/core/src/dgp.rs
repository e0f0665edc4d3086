//! Data generators for the synthetic grid, point and model-selection tasks.
//!
//! Every random quantity is drawn from its own ChaCha8 stream derived from
//! the task seed (see [`Stream`]), so e.g. the validation noise does not
//! shift when the number of training points changes. Sites and noise are
//! drawn sequentially, so the first `n` validation points of a dataset with
//! `N >= n` validation points are identical across datasets. The GP fields
//! are joint draws over all sites and therefore differ between datasets of
//! different sizes; experiments that need nested validation sets generate
//! the largest one and take prefixes ([`GeneratedDataset::with_val_prefix`]).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::geometry::{Metric, SiteSet};
use crate::kernels::{GpSampler, KernelSpec};
use crate::linalg::Matrix;

/// Stream ids of the per-seed RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sites = 1,
    Covariates = 2,
    Response = 3,
    TrainNoise = 4,
    ValNoise = 5,
    TestNoise = 6,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Grid,
    Point,
    ModelSelection,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Grid => "grid",
            TaskKind::Point => "point",
            TaskKind::ModelSelection => "model-selection",
        }
    }

    /// Kernel of the two covariate fields.
    pub fn covariate_kernel(self) -> Option<KernelSpec> {
        match self {
            TaskKind::Grid => Some(KernelSpec::matern32(0.3, 1.0)),
            TaskKind::Point => Some(KernelSpec::squared_exponential(0.3, 1.0)),
            TaskKind::ModelSelection => None,
        }
    }

    /// Response kernel over `covariate_dims` extra feature columns following
    /// the two site coordinates. With `covariate_dims = 2` this generates the
    /// data; with 1 it is the prior of the fitted model, which only sees the
    /// first covariate.
    pub fn response_kernel(self, covariate_dims: usize) -> Option<KernelSpec> {
        let cov: Vec<usize> = (2..2 + covariate_dims).collect();
        match self {
            TaskKind::Grid => Some(
                KernelSpec::matern32(0.5, 0.5)
                    .on_dims(&[0, 1])
                    .plus(KernelSpec::matern32(1.0, 1.0).on_dims(&cov)),
            ),
            TaskKind::Point => Some(
                KernelSpec::squared_exponential(0.5, 0.5)
                    .on_dims(&[0, 1])
                    .plus(KernelSpec::squared_exponential(1.0, 1.0).on_dims(&cov)),
            ),
            TaskKind::ModelSelection => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    /// Variance of the Gaussian response noise (grid and point tasks).
    pub noise_variance: f64,
    /// Number of test responses used for the empirical risk (point task).
    pub n_test_draws: usize,
}

impl SyntheticTask {
    pub fn grid(n_val: usize, seed: u64) -> Self {
        SyntheticTask {
            kind: TaskKind::Grid,
            n_train: 1000,
            n_val,
            seed,
            noise_variance: 0.1,
            n_test_draws: GRID_SIDE * GRID_SIDE,
        }
    }

    pub fn point(n_val: usize, seed: u64) -> Self {
        SyntheticTask {
            kind: TaskKind::Point,
            n_train: 1000,
            n_val,
            seed,
            noise_variance: 0.1,
            n_test_draws: 2500,
        }
    }

    pub fn model_selection(n_val: usize, seed: u64) -> Self {
        SyntheticTask {
            kind: TaskKind::ModelSelection,
            n_train: 100,
            n_val,
            seed,
            noise_variance: 0.0,
            n_test_draws: MS_TEST_SITES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::InvalidParameter("n_train and n_val must be positive".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
        }
        if self.kind == TaskKind::Point && self.n_test_draws == 0 {
            return Err(Error::InvalidParameter("point task needs at least one test draw".into()));
        }
        Ok(())
    }
}

const GRID_SIDE: usize = 50;
const MS_TEST_SITES: usize = 21;

/// Sites, covariates and responses of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub sites: SiteSet,
    /// One row per site; zero columns when the task has no covariates.
    pub covariates: Matrix,
    pub responses: Vec<f64>,
}

impl Split {
    /// `[site coordinates | covariates]`, the feature rows a model sees.
    pub fn features(&self) -> Matrix {
        let s = Matrix::new(self.sites.len(), self.sites.dim(), self.sites.coords().to_vec())
            .expect("site coordinates are a full matrix");
        Matrix::hstack(&[&s, &self.covariates]).expect("rows agree")
    }

    pub fn prefix(&self, n: usize) -> Split {
        Split {
            sites: self.sites.prefix(n),
            covariates: self.covariates.prefix_rows(n),
            responses: self.responses[..n.min(self.responses.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub task: SyntheticTask,
    pub train: Split,
    pub val: Split,
    /// Distinct test sites. `test.responses` holds one entry per test draw;
    /// draw `i` was observed at site `test_draw_sites[i]`.
    pub test: Split,
    pub test_draw_sites: Vec<usize>,
    /// Noiseless response mean at each distinct test site.
    pub true_mean_at_test: Vec<f64>,
}

impl GeneratedDataset {
    /// The same dataset restricted to its first `n` validation points.
    pub fn with_val_prefix(&self, n: usize) -> GeneratedDataset {
        let mut out = self.clone();
        out.val = self.val.prefix(n);
        out.task.n_val = out.val.sites.len();
        out
    }

    /// One row per point: `split,s1,..,x1,..,response`. Test rows are one
    /// per draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.train.sites.dim();
        let c = self.train.covariates.cols();
        let mut header = vec!["split".to_string()];
        header.extend((1..=d).map(|i| format!("s{i}")));
        header.extend((1..=c).map(|i| format!("x{i}")));
        header.push("response".into());
        w.write_record(&header)?;
        let mut row = |tag: &str, split: &Split, site: usize, y: f64| -> Result<()> {
            let mut rec = vec![tag.to_string()];
            rec.extend(split.sites.point(site).iter().map(|v| v.to_string()));
            rec.extend(split.covariates.row(site).iter().map(|v| v.to_string()));
            rec.push(y.to_string());
            w.write_record(&rec)?;
            Ok(())
        };
        for (tag, split) in [("train", &self.train), ("val", &self.val)] {
            for (i, &y) in split.responses.iter().enumerate() {
                row(tag, split, i, y)?;
            }
        }
        for (&site, &y) in self.test_draw_sites.iter().zip(&self.test.responses) {
            row("test", &self.test, site, y)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sequential Gaussian mixture sampler. A new component always carries
/// pseudo-weight 1; a component used for the first time ends with weight 2
/// and each reuse adds `1/w` to its weight `w`. New components get a mean
/// uniform on `[-0.5, 0.5]^2` and a standard deviation uniform on
/// `[0.05, 0.15]`. Returns the sites and each site's component label.
pub fn clustered_sites_labeled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (SiteSet, Vec<usize>) {
    let unit = Uniform::new(-0.5, 0.5).expect("valid range");
    let spread = Uniform::new(0.05, 0.15).expect("valid range");
    let mut means: Vec<[f64; 2]> = Vec::new();
    let mut sds: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut coords = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let total: f64 = weights.iter().sum::<f64>() + 1.0;
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len();
        for (j, &w) in weights.iter().enumerate() {
            if u < w {
                pick = j;
                break;
            }
            u -= w;
        }
        if pick == weights.len() {
            means.push([unit.sample(rng), unit.sample(rng)]);
            sds.push(spread.sample(rng));
            weights.push(2.0);
        } else {
            weights[pick] += 1.0 / weights[pick];
        }
        for axis in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            coords.push(means[pick][axis] + sds[pick] * z);
        }
        labels.push(pick);
    }
    let sites = SiteSet::new(Metric::euclidean(2), coords).expect("finite coordinates");
    (sites, labels)
}

pub fn clustered_sites<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SiteSet {
    clustered_sites_labeled(n, rng).0
}

pub fn uniform_square_sites<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SiteSet {
    let unit = Uniform::new(-0.5, 0.5).expect("valid range");
    let coords: Vec<f64> = (0..2 * n).map(|_| unit.sample(rng)).collect();
    SiteSet::new(Metric::euclidean(2), coords).expect("finite coordinates")
}

/// The 50 x 50 grid `{-0.5 + a/49}` on `[-0.5, 0.5]^2`.
pub fn grid_test_sites() -> SiteSet {
    SiteSet::regular_grid(GRID_SIDE, -0.5, 0.5, 2).expect("valid grid")
}

/// `{m / 20 : 0 <= m <= 20}`.
pub fn model_selection_test_sites() -> SiteSet {
    let xs: Vec<f64> = (0..MS_TEST_SITES).map(|m| m as f64 / 20.0).collect();
    SiteSet::line(&xs).expect("finite")
}

/// Site density `2s` on `[0, 1]`.
fn sqrt_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>().sqrt()).collect()
}

fn gaussian_noise(n: usize, variance: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    (0..n).map(|_| normal.sample(rng)).collect()
}

pub fn generate(task: &SyntheticTask) -> Result<GeneratedDataset> {
    task.validate()?;
    match task.kind {
        TaskKind::Grid | TaskKind::Point => generate_gp_task(task),
        TaskKind::ModelSelection => Ok(generate_model_selection(task)),
    }
}

fn generate_gp_task(task: &SyntheticTask) -> Result<GeneratedDataset> {
    let (n_tr, n_val) = (task.n_train, task.n_val);
    let mut site_rng = rng_for(task.seed, Stream::Sites);
    let (observed, test_sites) = match task.kind {
        TaskKind::Grid => (clustered_sites(n_tr + n_val, &mut site_rng), grid_test_sites()),
        _ => (
            uniform_square_sites(n_tr + n_val, &mut site_rng),
            SiteSet::from_points(Metric::euclidean(2), &[[0.0, 0.0]])?,
        ),
    };
    let all = SiteSet::concat(&[&observed, &test_sites])?;
    let n_all = all.len();
    let s = Matrix::new(n_all, 2, all.coords().to_vec())?;

    let cov_kernel = task.kind.covariate_kernel().expect("GP task");
    let chi = {
        let sampler = GpSampler::new(&s, &cov_kernel)?;
        let mut rng = rng_for(task.seed, Stream::Covariates);
        let c1 = sampler.sample(&mut rng);
        let c2 = sampler.sample(&mut rng);
        Matrix::from_columns(&[&c1, &c2])?
    };
    let features = Matrix::hstack(&[&s, &chi])?;
    let response_kernel = task.kind.response_kernel(2).expect("GP task");
    let f = GpSampler::new(&features, &response_kernel)?.sample(&mut rng_for(task.seed, Stream::Response));

    let eps_train = gaussian_noise(n_tr, task.noise_variance, &mut rng_for(task.seed, Stream::TrainNoise));
    let eps_val = gaussian_noise(n_val, task.noise_variance, &mut rng_for(task.seed, Stream::ValNoise));
    let split = |lo: usize, hi: usize, eps: &[f64]| Split {
        sites: all.select(&(lo..hi).collect::<Vec<_>>()),
        covariates: chi.slice_rows(lo, hi),
        responses: f[lo..hi].iter().zip(eps).map(|(a, b)| a + b).collect(),
    };
    let train = split(0, n_tr, &eps_train);
    let val = split(n_tr, n_tr + n_val, &eps_val);

    let n_test = test_sites.len();
    let true_mean_at_test = f[n_tr + n_val..].to_vec();
    let test_draw_sites: Vec<usize> = match task.kind {
        TaskKind::Grid => (0..n_test).collect(),
        _ => vec![0; task.n_test_draws],
    };
    let eps_test = gaussian_noise(
        test_draw_sites.len(),
        task.noise_variance,
        &mut rng_for(task.seed, Stream::TestNoise),
    );
    let test = Split {
        sites: test_sites,
        covariates: chi.slice_rows(n_tr + n_val, n_all),
        responses: test_draw_sites
            .iter()
            .zip(&eps_test)
            .map(|(&m, e)| true_mean_at_test[m] + e)
            .collect(),
    };
    Ok(GeneratedDataset {
        task: task.clone(),
        train,
        val,
        test,
        test_draw_sites,
        true_mean_at_test,
    })
}

fn generate_model_selection(task: &SyntheticTask) -> GeneratedDataset {
    let noise = Uniform::new(0.0, 0.1).expect("valid range");
    let mean = |s: f64| (s - 0.5).abs();
    let mut site_rng = rng_for(task.seed, Stream::Sites);
    let s_train = sqrt_uniform(task.n_train, &mut site_rng);
    let s_val = sqrt_uniform(task.n_val, &mut site_rng);
    let make = |s: Vec<f64>, stream: Stream| {
        let mut rng = rng_for(task.seed, stream);
        let responses = s.iter().map(|&x| mean(x) + noise.sample(&mut rng)).collect();
        Split {
            covariates: Matrix::zeros(s.len(), 0),
            sites: SiteSet::line(&s).expect("finite"),
            responses,
        }
    };
    let train = make(s_train, Stream::TrainNoise);
    let val = make(s_val, Stream::ValNoise);
    let test_x: Vec<f64> = model_selection_test_sites().coords().to_vec();
    let test = make(test_x.clone(), Stream::TestNoise);
    GeneratedDataset {
        task: task.clone(),
        train,
        val,
        test,
        test_draw_sites: (0..MS_TEST_SITES).collect(),
        true_mean_at_test: test_x.iter().map(|&s| mean(s) + 0.05).collect(),
    }
}
