use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spatial_risk::dgp::{generate, SyntheticTask, TaskKind};
use spatial_risk::estimators::{first_form_bound, general_dense_bound, second_form_bound, EstimatorConfig};
use spatial_risk::geometry::{grid_prediction_bound, iid_infill_bound, kth_order_fill_distance};
use spatial_risk::harness::{
    csv_width, estimate_csv, read_sites_csv, run_model_selection, run_risk_experiment, ExperimentResult,
    ExperimentSpec, ResultRow,
};
use spatial_risk::Metric;

mod config;

use config::{parse_seeds, FileConfig};

/// Test-risk estimation at fixed spatial test sites.
#[derive(Parser)]
#[command(name = "spatial-risk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Holdout, 1NN and SNN estimates from validation losses and test sites.
    Estimate(EstimateArgs),
    /// Run a synthetic experiment and summarise the result rows.
    Simulate(SimulateArgs),
    /// Write one generated dataset as CSV.
    Dataset(DatasetArgs),
    /// k-th order fill distance of one site set in another.
    FillDistance(FillArgs),
    /// Evaluate the error bounds.
    #[command(subcommand)]
    Bounds(BoundsCommand),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML settings file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Failure probability of the bounds.
    #[arg(long)]
    delta: Option<f64>,
    /// Upper bound on the loss.
    #[arg(long)]
    loss_bound: Option<f64>,
    /// Candidate k values for SNN, e.g. 1,2,4,8 (default: powers of two).
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// Lipschitz constant, for the certified bound.
    #[arg(long)]
    lipschitz: Option<f64>,
}

#[derive(Args, Clone)]
struct MetricArgs {
    #[arg(long, value_enum)]
    metric: Option<MetricKind>,
    /// Sphere radius for haversine distances (default 1, i.e. radians).
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    Euclidean,
    Haversine,
}

#[derive(Args)]
struct EstimateArgs {
    /// Validation CSV with header: s1[,s2,...],loss
    #[arg(long)]
    val: PathBuf,
    /// Test CSV with header: s1[,s2,...]
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    common: Common,
    /// Only print JSON.
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Grid,
    Point,
    ModelSelection,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::Grid => TaskKind::Grid,
            Task::Point => TaskKind::Point,
            Task::ModelSelection => TaskKind::ModelSelection,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    task: Task,
    /// Seeds as a half-open range `a..b` or a list `1,2,3`.
    #[arg(long)]
    seeds: Option<String>,
    /// Validation sizes, e.g. 250,500,1000.
    #[arg(long, value_delimiter = ',')]
    n_val: Option<Vec<usize>>,
    #[arg(long)]
    n_train: Option<usize>,
    /// Use the full profile (100 seeds, n_val up to 8000) as the base.
    #[arg(long)]
    full: bool,
    /// Result CSV to append to.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(value_enum)]
    task: Task,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_val: usize,
    #[arg(long)]
    n_train: Option<usize>,
    /// Output path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FillArgs {
    /// CSV of candidate sites (all columns are coordinates).
    #[arg(long)]
    candidates: PathBuf,
    /// CSV of target sites.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// k-NN error bounds for given validation and test sites.
    Sites {
        /// CSV of validation sites (coordinates only).
        #[arg(long)]
        val: PathBuf,
        /// CSV of test sites.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fill-distance bound for i.i.d. sites in the unit cube.
    Infill {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        /// Lower bound on the sampling density.
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// 1NN error bound for test sites on a regular grid.
    Grid {
        /// Fill distance of the validation sites in the test sites.
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n_test: usize,
        #[command(flatten)]
        common: Common,
    },
    /// SNN error bound in terms of the fill distance in the unit cube.
    Dense {
        #[arg(long)]
        fill: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n_val: usize,
        #[command(flatten)]
        common: Common,
    },
}

/// Exit code and message.
struct Failure(u8, String);

const INPUT_ERROR: u8 = 2;
const NUMERICAL_ERROR: u8 = 3;

impl From<spatial_risk::Error> for Failure {
    fn from(e: spatial_risk::Error) -> Self {
        let code = if e.is_numerical() { NUMERICAL_ERROR } else { INPUT_ERROR };
        Failure(code, e.to_string())
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure(INPUT_ERROR, msg.into())
}

type Outcome = Result<(), Failure>;

fn estimator_config(c: &Common, file: &FileConfig) -> Result<EstimatorConfig, Failure> {
    let d = EstimatorConfig::default();
    let cfg = EstimatorConfig {
        delta: c.delta.or(file.delta).unwrap_or(d.delta),
        loss_bound: c.loss_bound.or(file.loss_bound).unwrap_or(d.loss_bound),
        k_grid: c.k_grid.clone().or_else(|| file.k_grid.clone()),
        lipschitz: c.lipschitz.or(file.lipschitz),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Option<PathBuf>) -> Result<FileConfig, Failure> {
    config::load(path.as_deref()).map_err(input)
}

/// Euclidean dimension comes from the width of `sites_csv`.
fn metric(m: &MetricArgs, file: &FileConfig, sites_csv: &Path) -> Result<Metric, Failure> {
    let kind = match (m.metric, file.metric.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("euclidean")) => MetricKind::Euclidean,
        (None, Some("haversine")) => MetricKind::Haversine,
        (None, Some(other)) => return Err(input(format!("unknown metric {other:?}"))),
    };
    let radius = m.radius.or(file.radius);
    match kind {
        MetricKind::Euclidean => {
            if radius.is_some() {
                return Err(input("--radius only applies to the haversine metric"));
            }
            Ok(Metric::euclidean(csv_width(sites_csv)?))
        }
        MetricKind::Haversine => Ok(Metric::Haversine {
            radius: radius.unwrap_or(1.0),
        }),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

fn estimate(a: &EstimateArgs) -> Outcome {
    let file = load(&a.common.config)?;
    let cfg = estimator_config(&a.common, &file)?;
    let metric = metric(&a.metric, &file, &a.test)?;
    let t = estimate_csv(&a.val, &a.test, &cfg, metric)?;
    let se = t.holdout.diagnostics.holdout_se;
    let snn = &t.snn.diagnostics;
    let mut out = json!({
        "holdout": { "value": t.holdout.value, "se": se },
        "one_nn": { "value": t.one_nn.value },
        "snn": {
            "value": t.snn.value,
            "k": t.snn.chosen_k,
            "rho_k": snn.rho_k,
            "weight_l2": snn.weight_l2,
            "objective": snn.objective,
        },
    });
    if let Some(b) = snn.certified_bound {
        out["snn"]["certified_bound"] = json!(b);
    }
    if !a.quiet {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{:<10} {:>12}  detail", "estimator", "value");
        let holdout_detail = se.map_or("se n/a".to_string(), |s| format!("+/- {:.6} (2 se)", 2.0 * s));
        let _ = writeln!(err, "{:<10} {:>12.6}  {holdout_detail}", "holdout", t.holdout.value);
        let _ = writeln!(err, "{:<10} {:>12.6}", "1nn", t.one_nn.value);
        let _ = writeln!(
            err,
            "{:<10} {:>12.6}  k={} rho_k={:.6} |w|={:.6} objective={:.6}",
            "snn",
            t.snn.value,
            t.snn.chosen_k.unwrap_or(0),
            snn.rho_k,
            snn.weight_l2,
            snn.objective
        );
    }
    print_json(&out);
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn summarise(task: TaskKind, rows: &[ResultRow]) {
    let mut groups: BTreeMap<(usize, &str), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.n_val, r.estimator.as_str())).or_default().push(r);
    }
    if task == TaskKind::ModelSelection {
        println!("{:>6} {:<10} {:>8}", "n_val", "estimator", "%h0");
        for ((n, est), rs) in &groups {
            let h0 = rs.iter().filter(|r| r.selected_model.as_deref() == Some("h0")).count();
            println!("{n:>6} {est:<10} {:>8.1}", 100.0 * h0 as f64 / rs.len() as f64);
        }
        return;
    }
    println!("{:>6} {:<10} {:>12} {:>8}", "n_val", "estimator", "median|err|", "modal k");
    for ((n, est), rs) in &groups {
        let med = median(rs.iter().map(|r| r.abs_error).collect());
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for k in rs.iter().filter_map(|r| r.chosen_k) {
            *counts.entry(k).or_default() += 1;
        }
        let modal = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map_or("-".to_string(), |(k, _)| k.to_string());
        println!("{n:>6} {est:<10} {med:>12.6} {modal:>8}");
    }
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let file = load(&a.common.config)?;
    let task: TaskKind = a.task.into();
    let full = a.full || file.full.unwrap_or(false);
    let mut spec = if full { ExperimentSpec::full(task) } else { ExperimentSpec::desk(task) };
    spec.estimator = estimator_config(&a.common, &file)?;
    if let Some(s) = &a.seeds {
        spec.seeds = parse_seeds(s).map_err(input)?;
    } else if let Some(s) = &file.seeds {
        spec.seeds = s.resolve().map_err(input)?;
    }
    if let Some(n) = a.n_val.clone().or_else(|| file.n_val.clone()) {
        spec.n_val_schedule = n;
    }
    spec.n_train = a.n_train.or(file.n_train);
    spec.output = a.out.clone().or_else(|| file.out.clone());

    let result: ExperimentResult = match task {
        TaskKind::ModelSelection => run_model_selection(&spec)?,
        _ => run_risk_experiment(&spec)?,
    };
    if !result.skipped.is_empty() {
        eprintln!("skipped {} (seed, n_val) keys already in the output file", result.skipped.len());
    }
    summarise(task, &result.rows);
    if !result.failures.is_empty() {
        for (seed, msg) in &result.failures {
            eprintln!("seed {seed} failed: {msg}");
        }
        return Err(Failure(NUMERICAL_ERROR, format!("{} seeds failed", result.failures.len())));
    }
    Ok(())
}

fn dataset(a: &DatasetArgs) -> Outcome {
    let mut task = match a.task {
        Task::Grid => SyntheticTask::grid(a.n_val, a.seed),
        Task::Point => SyntheticTask::point(a.n_val, a.seed),
        Task::ModelSelection => SyntheticTask::model_selection(a.n_val, a.seed),
    };
    if let Some(n) = a.n_train {
        task.n_train = n;
    }
    let data = generate(&task)?;
    match &a.out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            data.write_csv(std::io::BufWriter::new(f))?
        }
        None => data.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn fill_distance(a: &FillArgs) -> Outcome {
    let file = load(&a.config)?;
    let metric = metric(&a.metric, &file, &a.targets)?;
    let candidates = read_sites_csv(&a.candidates, metric)?;
    let targets = read_sites_csv(&a.targets, metric)?;
    let rho = kth_order_fill_distance(&candidates, &targets, a.k)?;
    print_json(&json!({ "k": a.k, "fill_distance": rho }));
    Ok(())
}

fn bounds(b: &BoundsCommand) -> Outcome {
    match b {
        BoundsCommand::Sites { val, test, k, metric: m, common } => {
            let file = load(&common.config)?;
            let cfg = estimator_config(common, &file)?;
            let metric = metric(m, &file, test)?;
            let val = read_sites_csv(val, metric)?;
            let test = read_sites_csv(test, metric)?;
            let l = cfg.lipschitz.unwrap_or(1.0);
            print_json(&json!({
                "k": k,
                "lipschitz": l,
                "first_form": first_form_bound(&val, &test, *k, &cfg, l)?,
                "second_form": second_form_bound(&val, &test, *k, &cfg, l)?,
            }));
        }
        BoundsCommand::Infill { n, dim, density, delta, config } => {
            let file = load(config)?;
            let delta = delta.or(file.delta).unwrap_or(0.1);
            print_json(&json!({ "fill_distance_bound": iid_infill_bound(*n, *dim, *density, delta)? }));
        }
        BoundsCommand::Grid { rho, dim, n_test, common } => {
            let file = load(&common.config)?;
            let cfg = estimator_config(common, &file)?;
            let l = cfg.lipschitz.unwrap_or(1.0);
            let bound = grid_prediction_bound(*rho, *dim, *n_test, cfg.delta, l, cfg.loss_bound)?;
            print_json(&json!({ "bound": bound }));
        }
        BoundsCommand::Dense { fill, dim, n_val, common } => {
            let file = load(&common.config)?;
            let cfg = estimator_config(common, &file)?;
            let l = cfg.lipschitz.unwrap_or(1.0);
            print_json(&json!({ "bound": general_dense_bound(*fill, *dim, *n_val, &cfg, l)? }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Dataset(a) => dataset(a),
        Command::FillDistance(a) => fill_distance(a),
        Command::Bounds(b) => bounds(b),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
