//! Acceptance checks for the estimators, bounds and simulation harness.
//!
//! Each test prints one `[acceptance N] ... PASS|FAIL` line to stderr (shown
//! even when output is captured) and then asserts. The grid and point
//! experiments are shared between criteria and run once per process.
//!
//! Experiments use the desk profile (20 seeds, `n_val <= 2000`). Setting
//! `SPATIAL_RISK_FULL=1` switches to the full profile (100 seeds, `n_val` up
//! to 8000), which also enables the `n_val = 8000` chosen-k check.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_risk::dgp::TaskKind;
use spatial_risk::estimators::{
    first_form_bound, knn_estimate, knn_weights, max_ball_mass, powers_of_two, second_form_bound,
    snn_estimate, EstimatorConfig, LossSample, NeighborTable,
};
use spatial_risk::geometry::{
    fill_distance, iid_infill_bound, kth_order_fill_distance, unit_cube_fill_bracket,
};
use spatial_risk::harness::{
    empirical_test_risk, run_model_selection, run_risk_experiment, ExperimentSpec, Loss, ResultRow,
};
use spatial_risk::{Metric, NeighborIndex, SiteSet};

mod common;
use common::{brute_kth_fill, brute_snn, brute_weights};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance {id}] {name}: {verdict} ({detail})");
}

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn errors(rows: &[ResultRow], estimator: &str, n_val: usize) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.estimator == estimator && r.n_val == n_val)
        .map(|r| r.abs_error)
        .collect()
}

fn chosen_ks(rows: &[ResultRow], n_val: usize) -> Vec<usize> {
    rows.iter()
        .filter(|r| r.estimator == "snn" && r.n_val == n_val)
        .map(|r| r.chosen_k.expect("snn rows carry k"))
        .collect()
}

/// Most frequent value; ties go to the smaller one.
fn mode(xs: &[usize]) -> usize {
    let mut counts = BTreeMap::new();
    for &x in xs {
        *counts.entry(x).or_insert(0usize) += 1;
    }
    let top = counts.values().copied().max().expect("non-empty");
    counts.into_iter().find(|&(_, c)| c == top).unwrap().0
}

struct Run {
    rows: Vec<ResultRow>,
    seconds: f64,
}

fn run(spec: ExperimentSpec) -> Run {
    let start = Instant::now();
    let result = run_risk_experiment(&spec).expect("experiment runs");
    assert!(result.failures.is_empty(), "failed seeds: {:?}", result.failures);
    Run {
        rows: result.rows,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn full_profile() -> bool {
    std::env::var("SPATIAL_RISK_FULL").is_ok_and(|v| v == "1")
}

fn profile(task: TaskKind) -> ExperimentSpec {
    if full_profile() {
        ExperimentSpec::full(task)
    } else {
        ExperimentSpec::desk(task)
    }
}

fn grid_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run(profile(TaskKind::Grid)))
}

fn point_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run(profile(TaskKind::Point)))
}

#[test]
fn criterion_1_grid_consistency() {
    let r = grid_run();
    let ratio = |est: &str| median(errors(&r.rows, est, 2000)) / median(errors(&r.rows, est, 250));
    let (snn, one_nn, hold) = (ratio("snn"), ratio("1nn"), ratio("holdout"));
    let pass = snn <= 0.5 && one_nn <= 0.5 && hold >= 0.75;
    report(
        1,
        "grid task error trend",
        pass,
        &format!(
            "median error ratio 2000/250: snn {snn:.3}, 1nn {one_nn:.3}, holdout {hold:.3}; {:.0}s",
            r.seconds
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_point_contrast() {
    let r = point_run();
    let ratio = |est: &str| median(errors(&r.rows, est, 2000)) / median(errors(&r.rows, est, 250));
    let (snn, one_nn) = (ratio("snn"), ratio("1nn"));
    let pass = snn <= 0.5 && one_nn >= 0.5;
    report(
        2,
        "point task snn vs 1nn",
        pass,
        &format!("median error ratio 2000/250: snn {snn:.3}, 1nn {one_nn:.3}; {:.0}s", r.seconds),
    );
    assert!(pass);
}

#[test]
fn criterion_3_chosen_k() {
    let grid = grid_run();
    let mut grid_ok = true;
    let mut grid_detail = Vec::new();
    for n in profile(TaskKind::Grid).n_val_schedule {
        let ks = chosen_ks(&grid.rows, n);
        let share = ks.iter().filter(|&&k| k <= 4).count() as f64 / ks.len() as f64;
        grid_ok &= share >= 0.95;
        grid_detail.push(format!("{n}:{:.0}%", 100.0 * share));
    }

    let point = point_run();
    let modes: Vec<(usize, usize)> = profile(TaskKind::Point)
        .n_val_schedule
        .iter()
        .map(|&n| (n, mode(&chosen_ks(&point.rows, n))))
        .collect();
    let m = |n: usize| modes.iter().find(|p| p.0 == n).map(|p| p.1);
    let mut point_ok = m(250) < m(2000);
    let large = match m(8000) {
        Some(k) => {
            point_ok &= k >= 128;
            "n_val 8000 checked"
        }
        None => "n_val 8000 not run (full profile only)",
    };

    let pass = grid_ok && point_ok;
    report(
        3,
        "snn chosen k",
        pass,
        &format!(
            "grid k<=4 share {}; point modal k {}; {large}",
            grid_detail.join(" "),
            modes.iter().map(|(n, k)| format!("{n}:{k}")).collect::<Vec<_>>().join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_model_selection() {
    let start = Instant::now();
    let result = run_model_selection(&profile(TaskKind::ModelSelection)).unwrap();
    assert!(result.failures.is_empty(), "failed seeds: {:?}", result.failures);
    let secs = start.elapsed().as_secs_f64();
    let share_h0 = |est: &str, n: usize| {
        let picks: Vec<bool> = result
            .rows
            .iter()
            .filter(|r| r.estimator == est && r.n_val == n)
            .map(|r| r.selected_model.as_deref() == Some("h0"))
            .collect();
        picks.iter().filter(|&&p| p).count() as f64 / picks.len() as f64
    };
    let (snn75, nn75, hold75) = (share_h0("snn", 75), share_h0("1nn", 75), share_h0("holdout", 75));
    let at5 = ["holdout", "1nn", "snn"].map(|e| share_h0(e, 5));
    let pass = snn75 >= 0.9 && nn75 >= 0.9 && hold75 <= 0.1 && at5.iter().all(|&s| s < 0.5);
    report(
        4,
        "model selection",
        pass,
        &format!(
            "h0 share at 75: snn {snn75:.2}, 1nn {nn75:.2}, holdout {hold75:.2}; at 5: holdout {:.2}, 1nn {:.2}, snn {:.2}; {secs:.0}s",
            at5[0], at5[1], at5[2]
        ),
    );
    assert!(pass);
}

fn uniform_sites(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> SiteSet {
    let coords = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    SiteSet::new(Metric::euclidean(dim), coords).unwrap()
}

#[test]
fn criterion_5_bound_coverage() {
    // Expected loss g(s) = 0.3 + 0.4 s1 s2 on [0,1]^2, Lipschitz 0.4 sqrt(2);
    // observed losses are Bernoulli(g).
    let g = |s: &[f64]| 0.3 + 0.4 * s[0] * s[1];
    let lipschitz = 0.4 * 2f64.sqrt();
    let cfg = EstimatorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let val = uniform_sites(&mut rng, 1000, 2);
    let test = uniform_sites(&mut rng, 100, 2);
    let true_risk = test.iter().map(g).sum::<f64>() / test.len() as f64;
    let p: Vec<f64> = val.iter().map(g).collect();

    let ks = [1usize, 8, 64];
    let bounds: Vec<f64> = ks
        .iter()
        .map(|&k| first_form_bound(&val, &test, k, &cfg, lipschitz).unwrap())
        .collect();
    let mut covered = [0usize; 3];
    let redraws = 200;
    for _ in 0..redraws {
        let losses: Vec<f64> = p.iter().map(|&q| f64::from(u8::from(rng.random::<f64>() < q))).collect();
        let sample = LossSample::new(losses, 1.0).unwrap();
        for (i, &k) in ks.iter().enumerate() {
            let est = knn_estimate(&sample, &val, &test, k).unwrap().value;
            if (true_risk - est).abs() <= bounds[i] {
                covered[i] += 1;
            }
        }
    }
    let coverage: Vec<f64> = covered.iter().map(|&c| c as f64 / redraws as f64).collect();

    // First form never exceeds the second, here and on further layouts.
    let mut ordered = true;
    for layout in 0..20 {
        let (v, t) = if layout == 0 {
            (val.clone(), test.clone())
        } else {
            (uniform_sites(&mut rng, 1000, 2), uniform_sites(&mut rng, 100, 2))
        };
        for &k in &ks {
            let first = first_form_bound(&v, &t, k, &cfg, lipschitz).unwrap();
            let second = second_form_bound(&v, &t, k, &cfg, lipschitz).unwrap();
            ordered &= first <= second + 1e-12;
        }
    }

    let pass = coverage.iter().all(|&c| c >= 0.9) && ordered;
    report(
        5,
        "knn bound coverage",
        pass,
        &format!(
            "coverage k=1 {:.3}, k=8 {:.3}, k=64 {:.3}; first<=second on all layouts: {ordered}",
            coverage[0], coverage[1], coverage[2]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_iid_infill() {
    let bound = iid_infill_bound(1000, 2, 1.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trials = 500;
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let sites = uniform_sites(&mut rng, 1000, 2);
        // Upper end of the bracket, so the check never flatters the bound.
        let (_, upper) = unit_cube_fill_bracket(&sites, 101).unwrap();
        worst = worst.max(upper);
        if upper <= bound {
            within += 1;
        }
    }
    let share = within as f64 / trials as f64;
    let pass = share >= 0.9;
    report(
        6,
        "iid infill bound",
        pass,
        &format!("{within}/{trials} within bound {bound:.4}; largest fill {worst:.4}"),
    );
    assert!(pass);
}

/// Random instance; odd-numbered ones sit on a small integer lattice so that
/// distance ties and repeated sites are common.
fn random_instance(rng: &mut ChaCha8Rng, i: usize) -> (SiteSet, SiteSet) {
    let dim = rng.random_range(1..=3);
    let n = rng.random_range(1..=500);
    let m = rng.random_range(1..=100);
    let lattice = i % 2 == 1;
    let mut draw = |count: usize| {
        let coords = (0..count * dim)
            .map(|_| if lattice { rng.random_range(0..6) as f64 } else { rng.random::<f64>() })
            .collect();
        SiteSet::new(Metric::euclidean(dim), coords).unwrap()
    };
    let val = draw(n);
    let test = draw(m);
    (val, test)
}

#[test]
fn criterion_7_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = EstimatorConfig::default();
    let c = cfg.hoeffding_constant();
    let mut mismatches = Vec::new();
    for i in 0..100 {
        let (val, test) = random_instance(&mut rng, i);
        let n = val.len();
        let losses: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let sample = LossSample::new(losses.clone(), 1.0).unwrap();
        let mut ks = vec![1, n];
        ks.extend((0..3).map(|_| rng.random_range(1..=n)));

        if fill_distance(&val, &test).unwrap() != brute_kth_fill(&val, &test, 1) {
            mismatches.push(format!("instance {i}: fill distance"));
        }
        for &k in &ks {
            if kth_order_fill_distance(&val, &test, k).unwrap() != brute_kth_fill(&val, &test, k) {
                mismatches.push(format!("instance {i}: k={k} fill distance"));
            }
            let w = knn_weights(&val, &test, k).unwrap();
            let reference = brute_weights(&val, &test, k);
            if w.as_slice().iter().zip(&reference).any(|(a, b)| (a - b).abs() > 1e-12) {
                mismatches.push(format!("instance {i}: k={k} weights"));
            }
            let est = knn_estimate(&sample, &val, &test, k).unwrap().value;
            let expected: f64 = reference.iter().zip(&losses).map(|(a, b)| a * b).sum();
            if (est - expected).abs() > 1e-12 {
                mismatches.push(format!("instance {i}: k={k} estimate"));
            }
        }
        let snn = snn_estimate(&sample, &val, &test, &cfg).unwrap();
        let (k_ref, est_ref) = brute_snn(&losses, &val, &test, c);
        if snn.chosen_k != Some(k_ref) || (snn.value - est_ref).abs() > 1e-12 {
            mismatches.push(format!("instance {i}: snn k {:?} vs {k_ref}", snn.chosen_k));
        }
    }
    let pass = mismatches.is_empty();
    report(
        7,
        "brute-force oracle equivalence",
        pass,
        &format!("100 instances, {} mismatches {:?}", mismatches.len(), mismatches.iter().take(5).collect::<Vec<_>>()),
    );
    assert!(pass);
}

#[test]
fn criterion_8_powers_of_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = EstimatorConfig::default().hoeffding_constant();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (val, test) = random_instance(&mut rng, i);
        let n = val.len();
        let table = NeighborTable::build(&val, &test, n).unwrap();
        let test_index = NeighborIndex::build(&test).unwrap();
        let objective = |k: usize| {
            let rho = table.rho(k).unwrap();
            rho + c * (max_ball_mass(&test_index, &val, rho).unwrap() / k as f64).sqrt()
        };
        let all: Vec<f64> = (1..=n).map(objective).collect();
        let full_min = all.iter().copied().fold(f64::INFINITY, f64::min);
        let pow_min = powers_of_two(n).iter().map(|&k| all[k - 1]).fold(f64::INFINITY, f64::min);
        worst = worst.max(pow_min / full_min);
        if pow_min > 2f64.sqrt() * full_min {
            violations += 1;
        }
    }
    let pass = violations == 0;
    report(
        8,
        "powers-of-two suboptimality",
        pass,
        &format!("{violations} violations in 100 instances; worst ratio {worst:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_empirical_concentration() {
    let p = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 1000;
    let mut close = 0;
    for _ in 0..trials {
        let draws: Vec<f64> = (0..2500).map(|_| f64::from(u8::from(rng.random::<f64>() < p))).collect();
        let risk = empirical_test_risk(&draws, &vec![0.0; 2500], Loss::Absolute).unwrap();
        if (risk - p).abs() < 0.028 {
            close += 1;
        }
    }
    let share = close as f64 / trials as f64;
    let pass = share >= 0.95;
    report(9, "empirical risk concentration", pass, &format!("{close}/{trials} within 0.028"));
    assert!(pass);
}
