//! Seeded Monte Carlo experiments and ad-hoc estimation on CSV files.
//!
//! Result files are append-only CSV:
//!
//! ```text
//! # spatial-risk-results v1
//! seed,n_val,estimator,value,empirical_risk,abs_error,rel_error,chosen_k,selected_model
//! ```
//!
//! Rows are keyed by `(seed, n_val)`. Re-running an experiment against an
//! existing file only computes the missing keys, and rows are always written
//! in seed order, so identical specs give byte-identical files.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::{generate, GeneratedDataset, SyntheticTask, TaskKind};
use crate::error::{Error, Result};
use crate::estimators::{estimate_triple, EstimateTriple, EstimatorConfig, LossSample};
use crate::geometry::{Metric, SiteSet};
use crate::linalg::Matrix;
use crate::par;
use crate::predictors::{fit_affine_l1, fit_gp_posterior_mean, Predictor};

pub const RESULTS_VERSION_LINE: &str = "# spatial-risk-results v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `min(1, (a - b)^2)`.
    TruncatedSquared,
    /// `|a - b|`.
    Absolute,
}

impl Loss {
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            Loss::TruncatedSquared => ((a - b) * (a - b)).min(1.0),
            Loss::Absolute => (a - b).abs(),
        }
    }

    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::ModelSelection => Loss::Absolute,
            _ => Loss::TruncatedSquared,
        }
    }
}

/// Mean loss over aligned test responses and predictions.
pub fn empirical_test_risk(responses: &[f64], predictions: &[f64], loss: Loss) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    if responses.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: responses.len(),
            actual: predictions.len(),
        });
    }
    let total: f64 = responses.iter().zip(predictions).map(|(&y, &p)| loss.eval(y, p)).sum();
    Ok(total / responses.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub task: TaskKind,
    pub seeds: Vec<u64>,
    /// Non-decreasing; validation sets are nested prefixes across entries.
    pub n_val_schedule: Vec<usize>,
    pub estimator: EstimatorConfig,
    /// Result CSV to append to; `None` keeps rows in memory only.
    pub output: Option<PathBuf>,
    /// Overrides the task's default training-set size.
    pub n_train: Option<usize>,
}

impl ExperimentSpec {
    /// 20 seeds, `n_val <= 2000` (risk tasks); 100 seeds (model selection).
    pub fn desk(task: TaskKind) -> Self {
        let (seeds, schedule) = match task {
            TaskKind::ModelSelection => (100, (1..=15).map(|l| 5 * l).collect()),
            _ => (20, vec![250, 500, 1000, 2000]),
        };
        ExperimentSpec {
            task,
            seeds: (0..seeds).collect(),
            n_val_schedule: schedule,
            estimator: EstimatorConfig::default(),
            output: None,
            n_train: None,
        }
    }

    /// 100 seeds and `n_val` up to 8000.
    pub fn full(task: TaskKind) -> Self {
        let mut spec = Self::desk(task);
        spec.seeds = (0..100).collect();
        if task != TaskKind::ModelSelection {
            spec.n_val_schedule = vec![250, 500, 1000, 2000, 4000, 8000];
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        if self.seeds.is_empty() || self.n_val_schedule.is_empty() {
            return Err(Error::InvalidParameter("seeds and n_val schedule must be non-empty".into()));
        }
        if self.n_val_schedule[0] == 0 || self.n_val_schedule.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("n_val schedule must be positive and non-decreasing".into()));
        }
        if self.n_train == Some(0) {
            return Err(Error::InvalidParameter("n_train must be positive".into()));
        }
        Ok(())
    }

    fn task_for(&self, seed: u64, n_val: usize) -> SyntheticTask {
        let mut t = match self.task {
            TaskKind::Grid => SyntheticTask::grid(n_val, seed),
            TaskKind::Point => SyntheticTask::point(n_val, seed),
            TaskKind::ModelSelection => SyntheticTask::model_selection(n_val, seed),
        };
        if let Some(n) = self.n_train {
            t.n_train = n;
        }
        t
    }
}

/// One line of a result file. For model selection, estimator rows carry the
/// estimate and empirical risk of the model they select, and an extra
/// `empirical` row records the model with the lower empirical test risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub n_val: usize,
    pub estimator: String,
    pub value: f64,
    pub empirical_risk: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub chosen_k: Option<usize>,
    pub selected_model: Option<String>,
}

impl ResultRow {
    fn new(seed: u64, n_val: usize, estimator: &str, value: f64, empirical_risk: f64, chosen_k: Option<usize>) -> Self {
        ResultRow {
            seed,
            n_val,
            estimator: estimator.to_string(),
            value,
            empirical_risk,
            abs_error: (value - empirical_risk).abs(),
            rel_error: (empirical_risk - value) / empirical_risk,
            chosen_k,
            selected_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    /// Rows computed by this run, in seed, n_val, estimator order.
    pub rows: Vec<ResultRow>,
    /// `(seed, n_val)` keys already present in the output file.
    pub skipped: Vec<(u64, usize)>,
    /// Seeds whose generation or fit failed, with the error message. Their
    /// rows are not written, so a rerun retries them.
    pub failures: Vec<(u64, String)>,
}

const ESTIMATOR_NAMES: [&str; 3] = ["holdout", "1nn", "snn"];

fn triple_rows(seed: u64, n_val: usize, t: &EstimateTriple, empirical: f64) -> Vec<ResultRow> {
    [t.holdout, t.one_nn, t.snn]
        .iter()
        .zip(ESTIMATOR_NAMES)
        .map(|(e, name)| ResultRow::new(seed, n_val, name, e.value, empirical, e.chosen_k))
        .collect()
}

/// Losses bounded for the estimators: the sample bound is widened to the
/// largest observed loss when it exceeds the configured `Delta`, which only
/// enters the SNN constant.
fn loss_sample(losses: Vec<f64>, config: &EstimatorConfig) -> Result<LossSample> {
    let top = losses.iter().copied().fold(config.loss_bound, f64::max);
    LossSample::new(losses, top)
}

fn features_with(split_features: Matrix, cols: &[usize]) -> Matrix {
    split_features.select_cols(cols)
}

/// Grid or point task for one seed over the whole schedule.
fn risk_seed(spec: &ExperimentSpec, seed: u64, schedule: &[usize]) -> Result<Vec<ResultRow>> {
    let n_max = *schedule.last().expect("non-empty");
    let data = generate(&spec.task_for(seed, n_max))?;
    // The model sees the sites and the first covariate only.
    let cols = [0, 1, 2];
    let kernel = spec.task.response_kernel(1).expect("GP task");
    let noise = data.task.noise_variance;
    let model = fit_gp_posterior_mean(&features_with(data.train.features(), &cols), &data.train.responses, &kernel, noise)?;
    let predictor = Predictor::Gp(model);
    let loss = Loss::for_task(spec.task);
    let empirical = test_risk(&predictor, &data, &cols, loss)?;
    let val_pred = predictor.predict(&features_with(data.val.features(), &cols))?;
    let all_losses: Vec<f64> = data.val.responses.iter().zip(&val_pred).map(|(&y, &p)| loss.eval(y, p)).collect();
    let mut rows = Vec::new();
    for &n in schedule {
        let losses = loss_sample(all_losses[..n].to_vec(), &spec.estimator)?;
        let t = estimate_triple(&losses, &data.val.sites.prefix(n), &data.test.sites, &spec.estimator)?;
        rows.extend(triple_rows(seed, n, &t, empirical));
    }
    Ok(rows)
}

fn test_risk(predictor: &Predictor, data: &GeneratedDataset, cols: &[usize], loss: Loss) -> Result<f64> {
    let site_pred = predictor.predict(&features_with(data.test.features(), cols))?;
    let draw_pred: Vec<f64> = data.test_draw_sites.iter().map(|&m| site_pred[m]).collect();
    empirical_test_risk(&data.test.responses, &draw_pred, loss)
}

fn model_selection_seed(spec: &ExperimentSpec, seed: u64, schedule: &[usize]) -> Result<Vec<ResultRow>> {
    let n_max = *schedule.last().expect("non-empty");
    let data = generate(&spec.task_for(seed, n_max))?;
    let train_s = data.train.sites.coords();
    let models = [
        ("h0", Predictor::Constant(0.25)),
        ("h1", fit_affine_l1(train_s, &data.train.responses)?),
    ];
    let loss = Loss::Absolute;
    let cols = [0];
    let empirical: Vec<f64> = models
        .iter()
        .map(|(_, m)| test_risk(m, &data, &cols, loss))
        .collect::<Result<_>>()?;
    let val_losses: Vec<Vec<f64>> = models
        .iter()
        .map(|(_, m)| {
            let p = m.predict(&features_with(data.val.features(), &cols))?;
            Ok(data.val.responses.iter().zip(&p).map(|(&y, &q)| loss.eval(y, q)).collect())
        })
        .collect::<Result<_>>()?;

    let pick = |r0: f64, r1: f64| if r0 < r1 { 0 } else { 1 };
    let mut rows = Vec::new();
    for &n in schedule {
        let sites = data.val.sites.prefix(n);
        let triples: Vec<EstimateTriple> = val_losses
            .iter()
            .map(|l| estimate_triple(&loss_sample(l[..n].to_vec(), &spec.estimator)?, &sites, &data.test.sites, &spec.estimator))
            .collect::<Result<_>>()?;
        let per_estimator = |t: &EstimateTriple| [t.holdout, t.one_nn, t.snn];
        let est0 = per_estimator(&triples[0]);
        let est1 = per_estimator(&triples[1]);
        for (i, name) in ESTIMATOR_NAMES.iter().enumerate() {
            let choice = pick(est0[i].value, est1[i].value);
            let chosen = [est0[i], est1[i]][choice];
            let mut row = ResultRow::new(seed, n, name, chosen.value, empirical[choice], chosen.chosen_k);
            row.selected_model = Some(models[choice].0.to_string());
            rows.push(row);
        }
        let best = pick(empirical[0], empirical[1]);
        let mut row = ResultRow::new(seed, n, "empirical", empirical[best], empirical[best], None);
        row.selected_model = Some(models[best].0.to_string());
        rows.push(row);
    }
    Ok(rows)
}

/// Keys already present in a result file, after checking its version line.
pub fn existing_keys(path: &Path) -> Result<BTreeSet<(u64, usize)>> {
    let mut keys = BTreeSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    if first.is_empty() {
        return Ok(keys);
    }
    if first.trim_end() != RESULTS_VERSION_LINE {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected {RESULTS_VERSION_LINE:?}, found {:?}", first.trim_end()),
        });
    }
    for row in read_results(path)? {
        keys.insert((row.seed, row.n_val));
    }
    Ok(keys)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{RESULTS_VERSION_LINE}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    if fresh && rows.is_empty() {
        w.write_record(["seed", "n_val", "estimator", "value", "empirical_risk", "abs_error", "rel_error", "chosen_k", "selected_model"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run_experiment(
    spec: &ExperimentSpec,
    per_seed: fn(&ExperimentSpec, u64, &[usize]) -> Result<Vec<ResultRow>>,
) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut schedule = spec.n_val_schedule.clone();
    schedule.dedup();
    let done = match &spec.output {
        Some(p) => existing_keys(p)?,
        None => BTreeSet::new(),
    };
    let mut result = ExperimentResult::default();
    let mut work: Vec<(u64, Vec<usize>)> = Vec::new();
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    for seed in seeds {
        let todo: Vec<usize> = schedule.iter().copied().filter(|&n| !done.contains(&(seed, n))).collect();
        result.skipped.extend(schedule.iter().filter(|&&n| done.contains(&(seed, n))).map(|&n| (seed, n)));
        if !todo.is_empty() {
            work.push((seed, todo));
        }
    }
    // Seeds run in parallel chunks; each chunk is appended in seed order so
    // progress survives interruption and the file stays deterministic.
    let chunk = par::threads().max(1);
    for batch in work.chunks(chunk) {
        let outcomes = par::map(batch, |(seed, todo)| {
            // The dataset is generated at the largest n_val, so nested
            // prefixes must be computed from the full schedule; drop the
            // keys already on disk afterwards.
            let n_max = *schedule.last().expect("non-empty");
            let mut sched = todo.clone();
            if *sched.last().expect("non-empty") != n_max {
                sched.push(n_max);
            }
            per_seed(spec, *seed, &sched).map(|rows| rows.into_iter().filter(|r| todo.contains(&r.n_val)).collect::<Vec<_>>())
        });
        let mut rows = Vec::new();
        for ((seed, _), outcome) in batch.iter().zip(outcomes) {
            match outcome {
                Ok(r) => rows.extend(r),
                Err(e) => result.failures.push((*seed, e.to_string())),
            }
        }
        if let Some(p) = &spec.output {
            append_rows(p, &rows)?;
        }
        result.rows.extend(rows);
    }
    if let (Some(p), true) = (&spec.output, result.rows.is_empty()) {
        if !p.exists() {
            append_rows(p, &[])?;
        }
    }
    Ok(result)
}

/// Grid or point task: fit a GP on the sites and first covariate, estimate
/// its risk with holdout, 1NN and SNN at every schedule entry, and compare
/// against the empirical test risk.
pub fn run_risk_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.task == TaskKind::ModelSelection {
        return Err(Error::InvalidParameter("use run_model_selection for the model-selection task".into()));
    }
    run_experiment(spec, risk_seed)
}

/// Constant `h0 = 0.25` against an L1 affine fit `h1`; an estimator selects
/// `h0` when its risk estimate for `h0` is strictly smaller.
pub fn run_model_selection(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.task != TaskKind::ModelSelection {
        return Err(Error::InvalidParameter("run_model_selection needs the model-selection task".into()));
    }
    run_experiment(spec, model_selection_seed)
}

// ---------------------------------------------------------------------------
// CSV estimation

fn parse_number(field: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("column {column}: {:?} is not a number", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("column {column}: value must be finite"),
        });
    }
    Ok(v)
}

/// Reads a headed CSV of `width` numeric columns. Line numbers in errors
/// count the header as line 1.
fn read_numeric_csv(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_path(path)?;
    let header_len = r.headers()?.len();
    if header_len != width {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected {width} columns, header has {header_len}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .enumerate()
                .map(|(c, f)| parse_number(f, line, c + 1))
                .collect::<Result<_>>()?,
        );
    }
    Ok(rows)
}

fn to_sites(rows: &[Vec<f64>], metric: Metric, path: &Path) -> Result<SiteSet> {
    let coords: Vec<f64> = rows.iter().flat_map(|r| r[..metric.dim()].iter().copied()).collect();
    SiteSet::new(metric, coords).map_err(|e| match e {
        Error::InvalidCoordinate { index, reason } => Error::Parse {
            line: index + 2,
            msg: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

/// Number of columns in the header row of a CSV file.
pub fn csv_width(path: &Path) -> Result<usize> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    Ok(r.headers()?.len())
}

/// Sites from a headed CSV whose columns are exactly the coordinates.
pub fn read_sites_csv(path: &Path, metric: Metric) -> Result<SiteSet> {
    let rows = read_numeric_csv(path, metric.dim())?;
    if rows.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    to_sites(&rows, metric, path)
}

/// Holdout, 1NN and SNN estimates from a validation CSV `s1[,s2..],loss`
/// and a test CSV `s1[,s2..]`, both with a header row. Haversine sites are
/// `latitude,longitude` in radians.
pub fn estimate_csv(val_csv: &Path, test_csv: &Path, config: &EstimatorConfig, metric: Metric) -> Result<EstimateTriple> {
    config.validate()?;
    let d = metric.dim();
    let val_rows = read_numeric_csv(val_csv, d + 1)?;
    let test_rows = read_numeric_csv(test_csv, d)?;
    if val_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    let losses: Vec<f64> = val_rows.iter().map(|r| r[d]).collect();
    let losses = LossSample::new(losses, config.loss_bound).map_err(|e| match e {
        Error::LossOutOfRange { index, value, bound } => Error::Parse {
            line: index + 2,
            msg: format!("loss {value} outside [0, {bound}]"),
        },
        other => other,
    })?;
    let val = to_sites(&val_rows, metric, val_csv)?;
    let test = to_sites(&test_rows, metric, test_csv)?;
    estimate_triple(&losses, &val, &test, config)
}
