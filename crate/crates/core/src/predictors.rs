//! Predictive methods whose risk is estimated: constants, least-absolute-
//! deviation lines, GP posterior means and geographically weighted
//! regression (GWR).
//!
//! Every predictor maps feature rows `[site coordinates | covariates]` to
//! predictions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};
use crate::geometry::{Metric, SiteSet};
use crate::kernels::KernelSpec;
use crate::linalg::{cholesky_jittered, Matrix};
use crate::par;

/// Diagonal regulariser added to GP solves and GWR normal equations.
pub const SOLVE_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Constant(f64),
    AffineL1 { beta0: f64, beta1: f64 },
    Gp(GpPredictor),
    Gwr(GwrPredictor),
}

impl Predictor {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Predictor::Constant(c) => Ok(vec![*c; x.rows()]),
            Predictor::AffineL1 { beta0, beta1 } => {
                if x.cols() == 0 {
                    return Err(Error::InvalidParameter("affine predictor needs a site column".into()));
                }
                Ok((0..x.rows()).map(|i| beta0 + beta1 * x.get(i, 0)).collect())
            }
            Predictor::Gp(gp) => gp.predict(x),
            Predictor::Gwr(gwr) => gwr.predict(x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Constant(_) => "constant",
            Predictor::AffineL1 { .. } => "affine-l1",
            Predictor::Gp(_) => "gp",
            Predictor::Gwr(_) => "gwr",
        }
    }
}

// ---------------------------------------------------------------------------
// GP posterior mean

#[derive(Debug, Clone, PartialEq)]
pub struct GpPredictor {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    /// Constant prior mean (the training mean for the data-driven baseline).
    pub mean_offset: f64,
    train_x: Matrix,
    train_y: Vec<f64>,
    alpha: Vec<f64>,
}

impl GpPredictor {
    pub fn train_x(&self) -> &Matrix {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.train_x.cols() {
            return Err(Error::LengthMismatch {
                expected: self.train_x.cols(),
                actual: x.cols(),
            });
        }
        Ok(par::map_indices(x.rows(), |i| {
            let q = x.row(i);
            let mut acc = 0.0;
            for (j, a) in self.alpha.iter().enumerate() {
                acc += self.kernel.eval(q, self.train_x.row(j)) * a;
            }
            self.mean_offset + acc
        }))
    }
}

fn check_training(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::EmptySiteSet);
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if y.iter().chain(x.data()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("training data must be finite".into()));
    }
    Ok(())
}

/// `k_*^T (K + noise I)^{-1} y` with a zero prior mean.
pub fn fit_gp_posterior_mean(x: &Matrix, y: &[f64], kernel: &KernelSpec, noise_variance: f64) -> Result<GpPredictor> {
    fit_gp_with_offset(x, y, kernel, noise_variance, 0.0)
}

fn fit_gp_with_offset(
    x: &Matrix,
    y: &[f64],
    kernel: &KernelSpec,
    noise_variance: f64,
    mean_offset: f64,
) -> Result<GpPredictor> {
    check_training(x, y)?;
    kernel.validate(x.cols())?;
    if !(noise_variance.is_finite() && noise_variance >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance {noise_variance} must be >= 0")));
    }
    let mut k = kernel.gram(x);
    for i in 0..x.rows() {
        k[(i, i)] += noise_variance;
    }
    let (llt, _) = cholesky_jittered(k, SOLVE_RIDGE).map_err(|e| Error::Singular(format!("GP training system: {e}")))?;
    let mut rhs = Mat::from_fn(y.len(), 1, |i, _| y[i] - mean_offset);
    llt.solve_in_place(rhs.as_mut());
    Ok(GpPredictor {
        kernel: kernel.clone(),
        noise_variance,
        mean_offset,
        train_x: x.clone(),
        train_y: y.to_vec(),
        alpha: (0..y.len()).map(|i| rhs[(i, 0)]).collect(),
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Hyperparameters of the spatial GP baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    /// Lengthscales at the per-dimension standard deviation of the inputs,
    /// variance at the response variance and noise at a tenth of it.
    pub fn heuristic(x: &Matrix, y: &[f64]) -> Self {
        let (_, vy) = mean_var(y);
        let vy = if vy > 0.0 { vy } else { 1.0 };
        GpHyper {
            lengthscales: (0..x.cols())
                .map(|j| {
                    let sd = mean_var(&x.column(j)).1.sqrt();
                    if sd > 0.0 { sd } else { 1.0 }
                })
                .collect(),
            variance: vy,
            noise_variance: 0.1 * vy,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::matern32(1.0, self.variance).with_lengthscales(&self.lengthscales)
    }

    fn log_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(self.variance.ln());
        p.push(self.noise_variance.ln());
        p
    }

    fn from_log_params(p: &[f64]) -> Self {
        let d = p.len() - 2;
        GpHyper {
            lengthscales: p[..d].iter().map(|v| v.exp()).collect(),
            variance: p[d].exp(),
            noise_variance: p[d + 1].exp(),
        }
    }
}

/// Log marginal likelihood of centred responses under an ARD Matérn-3/2 GP
/// and its gradient with respect to the log hyperparameters
/// (lengthscales, variance, noise variance).
pub fn gp_log_marginal_likelihood(x: &Matrix, y: &[f64], hyper: &GpHyper) -> Result<(f64, Vec<f64>)> {
    check_training(x, y)?;
    let n = x.rows();
    let d = x.cols();
    let kernel = hyper.kernel();
    let mut k = kernel.gram(x);
    for i in 0..n {
        k[(i, i)] += hyper.noise_variance;
    }
    let (llt, _) = cholesky_jittered(k, SOLVE_RIDGE).map_err(|e| Error::Singular(format!("GP likelihood: {e}")))?;
    let mut alpha = Mat::from_fn(n, 1, |i, _| y[i]);
    llt.solve_in_place(alpha.as_mut());
    let l = llt.L();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let fit: f64 = (0..n).map(|i| y[i] * alpha[(i, 0)]).sum();
    let lml = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let mut kinv = Mat::<f64>::identity(n, n);
    llt.solve_in_place(kinv.as_mut());
    // W = alpha alpha^T - K^{-1}; dL/dtheta = tr(W dK/dtheta) / 2.
    let w = |i: usize, j: usize| alpha[(i, 0)] * alpha[(j, 0)] - kinv[(i, j)];
    let s3 = 3f64.sqrt();
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let wij = w(i, j);
            let (a, b) = (x.row(i), x.row(j));
            let mut r2 = 0.0;
            let mut parts = vec![0.0; d];
            for t in 0..d {
                let u = (a[t] - b[t]) / hyper.lengthscales[t];
                parts[t] = u * u;
                r2 += u * u;
            }
            let e = (-s3 * r2.sqrt()).exp();
            for t in 0..d {
                grad[t] += wij * 3.0 * hyper.variance * e * parts[t];
            }
            grad[d] += wij * hyper.variance * (1.0 + s3 * r2.sqrt()) * e;
        }
        grad[d + 1] += w(i, i) * hyper.noise_variance;
    }
    grad.iter_mut().for_each(|g| *g *= 0.5);
    Ok((lml, grad))
}

/// Spatial GP baseline: constant mean at the training average, ARD
/// Matérn-3/2 kernel with heuristic hyperparameters, optionally refined by
/// `ascent_steps` fixed-size gradient steps on the log marginal likelihood
/// in log-parameter space.
pub fn fit_gp_baseline(x: &Matrix, y: &[f64], ascent_steps: usize, step_size: f64) -> Result<(GpPredictor, GpHyper)> {
    check_training(x, y)?;
    let (mean, _) = mean_var(y);
    let centred: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let mut hyper = GpHyper::heuristic(x, y);
    for _ in 0..ascent_steps {
        let (_, grad) = gp_log_marginal_likelihood(x, &centred, &hyper)?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let p: Vec<f64> = hyper
            .log_params()
            .iter()
            .zip(&grad)
            .map(|(p, g)| p + step_size * g / norm)
            .collect();
        hyper = GpHyper::from_log_params(&p);
    }
    let gp = fit_gp_with_offset(x, y, &hyper.kernel(), hyper.noise_variance, mean)?;
    Ok((gp, hyper))
}

// ---------------------------------------------------------------------------
// Least absolute deviations line

fn l1_objective(x: &[f64], y: &[f64], beta0: f64, beta1: f64) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (yi - beta0 - beta1 * xi).abs()).sum::<f64>() / x.len() as f64
}

/// Smallest `b` minimising `sum_j w_j |s_j - b|`.
fn lower_weighted_median(mut pairs: Vec<(f64, f64)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = pairs.iter().map(|p| p.1).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for &(s, w) in &pairs {
        acc += w;
        if acc >= half {
            return s;
        }
    }
    pairs.last().expect("non-empty").0
}

/// Line minimising the mean absolute residual on 1-d data.
///
/// Some optimal line passes through two data points. Fixing one of them,
/// the optimal slope is a weighted median of the slopes to all others, so
/// one weighted median per anchor point finds the optimum in
/// `O(n^2 log n)`. Among optimal lines the lexicographically smallest
/// `(beta1, beta0)` is returned.
pub fn fit_affine_l1(x: &[f64], y: &[f64]) -> Result<Predictor> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("training data must be finite".into()));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::InvalidParameter("affine fit needs at least two distinct sites".into()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..x.len() {
        let pairs: Vec<(f64, f64)> = (0..x.len())
            .filter(|&j| x[j] != x[i])
            .map(|j| ((y[j] - y[i]) / (x[j] - x[i]), (x[j] - x[i]).abs()))
            .collect();
        let beta1 = lower_weighted_median(pairs);
        let beta0 = y[i] - beta1 * x[i];
        let obj = l1_objective(x, y, beta0, beta1);
        let better = match best {
            None => true,
            Some((b_obj, b1, b0)) => {
                let tol = 1e-12 * (1.0 + b_obj.abs());
                obj < b_obj - tol || (obj <= b_obj + tol && (beta1, beta0) < (b1, b0))
            }
        };
        if better {
            best = Some((obj, beta1, beta0));
        }
    }
    let (_, beta1, beta0) = best.expect("at least one anchor");
    Ok(Predictor::AffineL1 { beta0, beta1 })
}

// ---------------------------------------------------------------------------
// Geographically weighted regression

/// Candidate GWR lengthscales in km.
pub const GWR_LENGTHSCALES_KM: [f64; 11] = [25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0, 500.0, 750.0, 1000.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GwrPredictor {
    /// In the units of `metric` distances.
    pub lengthscale: f64,
    /// Use `exp(-d^2 / (2 l^2))` instead of `exp(-d / (2 l^2))`.
    pub squared_distance: bool,
    sites: SiteSet,
    covariates: Matrix,
    y: Vec<f64>,
}

/// Solves the symmetric positive definite 3 x 3 system `a x = b`.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for t in 0..j {
                s -= l[i][t] * l[j][t];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = [0.0; 3];
    for i in 0..3 {
        z[i] = (b[i] - (0..i).map(|t| l[i][t] * z[t]).sum::<f64>()) / l[i][i];
    }
    let mut out = [0.0; 3];
    for i in (0..3).rev() {
        out[i] = (z[i] - (i + 1..3).map(|t| l[t][i] * out[t]).sum::<f64>()) / l[i][i];
    }
    Some(out)
}

impl GwrPredictor {
    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    fn weight_exponents(&self, q: &[f64], skip: Option<usize>) -> Vec<(usize, f64)> {
        let denom = 2.0 * self.lengthscale * self.lengthscale;
        (0..self.sites.len())
            .filter(|&i| Some(i) != skip)
            .map(|i| {
                let d = self.sites.distance(i, q);
                let d = if self.squared_distance { d * d } else { d };
                (i, -d / denom)
            })
            .collect()
    }

    /// Local coefficients `(b0, b1, b2)` at site `q`, optionally leaving one
    /// training point out. Weights are rescaled so the largest is 1, which
    /// leaves the weighted least squares solution unchanged.
    pub fn coefficients(&self, q: &[f64], skip: Option<usize>) -> Result<[f64; 3]> {
        let expo = self.weight_exponents(q, skip);
        let top = expo.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Singular("no training points carry weight".into()));
        }
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for (i, e) in expo {
            let w = (e - top).exp();
            let z = [1.0, self.covariates.get(i, 0), self.covariates.get(i, 1)];
            for r in 0..3 {
                b[r] += w * z[r] * self.y[i];
                for c in 0..3 {
                    a[r][c] += w * z[r] * z[c];
                }
            }
        }
        for (r, row) in a.iter_mut().enumerate() {
            row[r] += SOLVE_RIDGE;
        }
        solve3(a, b).ok_or_else(|| Error::Singular("GWR normal equations are rank deficient".into()))
    }

    fn predict_row(&self, row: &[f64], skip: Option<usize>) -> Result<f64> {
        let d = self.sites.dim();
        let beta = self.coefficients(&row[..d], skip)?;
        Ok(beta[0] + beta[1] * row[d] + beta[2] * row[d + 1])
    }

    /// Rows are `[site | x1, x2]`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let expected = self.sites.dim() + 2;
        if x.cols() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: x.cols(),
            });
        }
        par::map_indices(x.rows(), |i| self.predict_row(x.row(i), None))
            .into_iter()
            .collect()
    }

    /// Mean squared leave-one-out error on the training data.
    pub fn loo_mse(&self) -> Result<f64> {
        let d = self.sites.dim();
        let errs: Result<Vec<f64>> = par::map_indices(self.y.len(), |i| {
            let mut row = self.sites.point(i).to_vec();
            row.extend_from_slice(&self.covariates.row(i)[..2]);
            debug_assert_eq!(row.len(), d + 2);
            self.predict_row(&row, Some(i)).map(|p| (p - self.y[i]).powi(2))
        })
        .into_iter()
        .collect();
        let errs = errs?;
        Ok(errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

/// GWR with two covariates at a fixed lengthscale.
pub fn fit_gwr(
    sites: &SiteSet,
    covariates: &Matrix,
    y: &[f64],
    lengthscale: f64,
    squared_distance: bool,
) -> Result<GwrPredictor> {
    sites.require_nonempty()?;
    if covariates.cols() != 2 {
        return Err(Error::InvalidParameter(format!(
            "GWR expects 2 covariates, got {}",
            covariates.cols()
        )));
    }
    check_training(covariates, y)?;
    if sites.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: sites.len(),
            actual: y.len(),
        });
    }
    if y.len() < 3 {
        return Err(Error::InvalidParameter("GWR needs at least 3 training points".into()));
    }
    if !(lengthscale.is_finite() && lengthscale > 0.0) {
        return Err(Error::InvalidParameter(format!("lengthscale {lengthscale} must be positive")));
    }
    Ok(GwrPredictor {
        lengthscale,
        squared_distance,
        sites: sites.clone(),
        covariates: covariates.clone(),
        y: y.to_vec(),
    })
}

/// Fits GWR for every candidate lengthscale and keeps the one with the
/// smallest leave-one-out mean squared error (ties go to the first).
/// Candidates whose systems are singular are skipped.
pub fn fit_gwr_cv(
    sites: &SiteSet,
    covariates: &Matrix,
    y: &[f64],
    candidates: &[f64],
    squared_distance: bool,
) -> Result<(GwrPredictor, Vec<(f64, f64)>)> {
    let mut scores = Vec::new();
    let mut best: Option<(f64, GwrPredictor)> = None;
    for &l in candidates {
        let model = fit_gwr(sites, covariates, y, l, squared_distance)?;
        let mse = match model.loo_mse() {
            Ok(m) => m,
            Err(e) if e.is_numerical() => f64::INFINITY,
            Err(e) => return Err(e),
        };
        scores.push((l, mse));
        if best.as_ref().is_none_or(|(b, _)| mse < *b) {
            best = Some((mse, model));
        }
    }
    match best {
        Some((mse, model)) if mse.is_finite() => Ok((model, scores)),
        _ => Err(Error::Singular("no GWR lengthscale gave a solvable fit".into())),
    }
}

// ---------------------------------------------------------------------------
// Text persistence

/// Training data of a fitted GP or GWR predictor as CSV rows
/// `s1..sd,x1..xc,y`.
pub fn write_training_csv(path: &Path, sites: &Matrix, covariates: &Matrix, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=sites.cols()).map(|i| format!("s{i}")).collect();
    header.extend((1..=covariates.cols()).map(|i| format!("x{i}")));
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..y.len() {
        let rec: Vec<String> = sites
            .row(i)
            .iter()
            .chain(covariates.row(i))
            .chain(std::iter::once(&y[i]))
            .map(|v| v.to_string())
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_training_csv(path: &Path, site_dim: usize, cov_dim: usize) -> Result<(Matrix, Matrix, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let width = site_dim + cov_dim + 1;
    let (mut s, mut c, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        s.extend_from_slice(&vals[..site_dim]);
        c.extend_from_slice(&vals[site_dim..site_dim + cov_dim]);
        y.push(vals[width - 1]);
    }
    let n = y.len();
    Ok((Matrix::new(n, site_dim, s)?, Matrix::new(n, cov_dim, c)?, y))
}

/// Serialised predictor: a `predictor v1` line followed by `key = value`
/// lines. GP and GWR predictors reference a training-data CSV (see
/// [`write_training_csv`]) and are refitted on load.
///
/// ```text
/// predictor v1
/// kind = gp
/// kernel = matern32(var=0.5;ls=0.5;dims=0,1) + matern32(var=1;ls=1;dims=2) | jitter=1e-12
/// noise_variance = 0.1
/// mean_offset = 0
/// training_data = train.csv
/// site_dim = 2
/// covariate_dim = 1
/// ```
pub fn predictor_to_text(p: &Predictor, training_data: Option<&Path>, site_dim: usize) -> Result<String> {
    let mut out = String::from("predictor v1\n");
    let _ = writeln!(out, "kind = {}", p.kind());
    let need_data = || {
        training_data.ok_or_else(|| Error::InvalidParameter("this predictor needs a training data path".into()))
    };
    match p {
        Predictor::Constant(c) => {
            let _ = writeln!(out, "value = {c}");
        }
        Predictor::AffineL1 { beta0, beta1 } => {
            let _ = writeln!(out, "beta0 = {beta0}\nbeta1 = {beta1}");
        }
        Predictor::Gp(gp) => {
            let _ = writeln!(
                out,
                "kernel = {}\nnoise_variance = {}\nmean_offset = {}\ntraining_data = {}\nsite_dim = {}\ncovariate_dim = {}",
                gp.kernel.to_text(),
                gp.noise_variance,
                gp.mean_offset,
                need_data()?.display(),
                site_dim,
                gp.train_x.cols() - site_dim
            );
        }
        Predictor::Gwr(g) => {
            let _ = writeln!(
                out,
                "metric = {}\nlengthscale = {}\nsquared_distance = {}\ntraining_data = {}\nsite_dim = {}\ncovariate_dim = 2",
                metric_tag(g.sites.metric()),
                g.lengthscale,
                g.squared_distance,
                need_data()?.display(),
                g.sites.dim()
            );
        }
    }
    Ok(out)
}

fn metric_tag(m: Metric) -> String {
    match m {
        Metric::Euclidean { .. } => "euclidean".into(),
        Metric::Haversine { radius } => format!("haversine:{radius}"),
    }
}

fn parse_metric(s: &str, dim: usize) -> Result<Metric> {
    if s == "euclidean" {
        return Ok(Metric::euclidean(dim));
    }
    let radius = s
        .strip_prefix("haversine:")
        .and_then(|r| r.parse::<f64>().ok())
        .ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unknown metric {s:?}"),
        })?;
    Ok(Metric::Haversine { radius })
}

/// Parses [`predictor_to_text`] output; relative training-data paths are
/// resolved against `base_dir`.
pub fn predictor_from_text(text: &str, base_dir: &Path) -> Result<Predictor> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == "predictor v1" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header 'predictor v1'".into(),
            })
        }
    }
    let mut kv = std::collections::BTreeMap::new();
    for (i, l) in lines {
        let (k, v) = l.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key = value, found {l:?}"),
        })?;
        kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    let get = |k: &str| -> Result<&(usize, String)> {
        kv.get(k).ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("missing key {k:?}"),
        })
    };
    let num = |k: &str| -> Result<f64> {
        let (line, v) = get(k)?;
        v.parse::<f64>().map_err(|e| Error::Parse {
            line: *line,
            msg: format!("{k}: {e}"),
        })
    };
    let int = |k: &str| -> Result<usize> {
        let (line, v) = get(k)?;
        v.parse::<usize>().map_err(|e| Error::Parse {
            line: *line,
            msg: format!("{k}: {e}"),
        })
    };
    let data_path = || -> Result<PathBuf> {
        let p = PathBuf::from(&get("training_data")?.1);
        Ok(if p.is_absolute() { p } else { base_dir.join(p) })
    };
    match get("kind")?.1.as_str() {
        "constant" => Ok(Predictor::Constant(num("value")?)),
        "affine-l1" => Ok(Predictor::AffineL1 {
            beta0: num("beta0")?,
            beta1: num("beta1")?,
        }),
        "gp" => {
            let kernel = KernelSpec::parse(&get("kernel")?.1)?;
            let (s, c, y) = read_training_csv(&data_path()?, int("site_dim")?, int("covariate_dim")?)?;
            let x = Matrix::hstack(&[&s, &c])?;
            fit_gp_with_offset(&x, &y, &kernel, num("noise_variance")?, num("mean_offset")?).map(Predictor::Gp)
        }
        "gwr" => {
            let site_dim = int("site_dim")?;
            let metric = parse_metric(&get("metric")?.1, site_dim)?;
            let squared = get("squared_distance")?.1 == "true";
            let (s, c, y) = read_training_csv(&data_path()?, site_dim, 2)?;
            let sites = SiteSet::new(metric, s.data().to_vec())?;
            fit_gwr(&sites, &c, &y, num("lengthscale")?, squared).map(Predictor::Gwr)
        }
        other => Err(Error::Parse {
            line: get("kind")?.0,
            msg: format!("unknown predictor kind {other:?}"),
        }),
    }
}
