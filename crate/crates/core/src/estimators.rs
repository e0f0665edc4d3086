//! Holdout, k-NN and spatial nearest neighbor (SNN) test-risk estimators,
//! and the error bounds used to pick and certify k.
//!
//! All estimators consume per-validation-point losses, so any predictive
//! method can be validated without the estimators knowing about it.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{check_delta, same_metric, SiteSet};
use crate::index::{NeighborIndex, NeighborSet};
use crate::par;

/// Realised losses at the validation sites, each in `[0, loss_bound]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    values: Vec<f64>,
    loss_bound: f64,
}

impl LossSample {
    pub fn new(values: Vec<f64>, loss_bound: f64) -> Result<Self> {
        if !(loss_bound.is_finite() && loss_bound >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss bound must be finite and non-negative, got {loss_bound}"
            )));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value >= 0.0 && value <= loss_bound) {
                return Err(Error::LossOutOfRange {
                    index,
                    value,
                    bound: loss_bound,
                });
            }
        }
        Ok(LossSample { values, loss_bound })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn loss_bound(&self) -> f64 {
        self.loss_bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn prefix(&self, n: usize) -> LossSample {
        LossSample {
            values: self.values[..n.min(self.len())].to_vec(),
            loss_bound: self.loss_bound,
        }
    }

    fn check_aligned(&self, sites: &SiteSet) -> Result<()> {
        if self.len() != sites.len() {
            return Err(Error::LengthMismatch {
                expected: sites.len(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}

/// Non-negative weights over the validation points, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Parameters shared by the k-NN estimators and their bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Failure probability of the high-probability bounds, in `(0, 1)`.
    pub delta: f64,
    /// Upper bound `Delta` on the loss.
    pub loss_bound: f64,
    /// Candidate neighbor counts for SNN. `None` means all powers of two up
    /// to the number of validation points, starting at 1.
    pub k_grid: Option<Vec<usize>>,
    /// Lipschitz constant of the average loss, used only to report a
    /// certified bound. SNN selection always plugs in 1.
    pub lipschitz: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            delta: 0.1,
            loss_bound: 1.0,
            k_grid: None,
            lipschitz: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if !(self.loss_bound.is_finite() && self.loss_bound >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss bound must be finite and non-negative, got {}",
                self.loss_bound
            )));
        }
        if let Some(grid) = &self.k_grid {
            if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(
                    "k grid must be a non-empty, strictly increasing list of positive integers".into(),
                ));
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidParameter(format!("Lipschitz constant must be >= 0, got {l}")));
            }
        }
        Ok(())
    }

    /// `Delta * sqrt(log(2 / delta) / 2)`.
    pub fn hoeffding_constant(&self) -> f64 {
        hoeffding_constant(self.loss_bound, self.delta)
    }

    /// The k grid to use with `n_val` validation points.
    pub fn resolved_k_grid(&self, n_val: usize) -> Result<Vec<usize>> {
        match &self.k_grid {
            Some(grid) => {
                if let Some(&k) = grid.iter().find(|&&k| k == 0 || k > n_val) {
                    return Err(Error::KOutOfRange { k, n: n_val });
                }
                Ok(grid.clone())
            }
            None => Ok(powers_of_two(n_val)),
        }
    }
}

/// `{1, 2, 4, ...}` up to and including `n` when it is a power of two.
pub fn powers_of_two(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= n)
        .collect()
}

pub fn hoeffding_constant(loss_bound: f64, delta: f64) -> f64 {
    loss_bound * (0.5 * (2.0 / delta).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Holdout,
    Knn(usize),
    Snn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Holdout => f.write_str("holdout"),
            Method::Knn(k) => write!(f, "{k}nn"),
            Method::Snn => f.write_str("snn"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub rho_k: f64,
    pub weight_l2: f64,
    pub objective: f64,
    pub holdout_se: Option<f64>,
    pub certified_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    pub method: Method,
    pub chosen_k: Option<usize>,
    pub diagnostics: Diagnostics,
}

/// Terms of the SNN selection objective for one k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnnObjective {
    pub k: usize,
    pub rho_k: f64,
    pub weight_l2: f64,
    pub objective: f64,
}

/// Unweighted mean of the validation losses, with its centred standard error.
pub fn holdout(losses: &LossSample) -> Result<RiskEstimate> {
    if losses.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    let n = losses.len() as f64;
    let mean = losses.values.iter().sum::<f64>() / n;
    let se = (losses.len() > 1).then(|| {
        let ss: f64 = losses.values.iter().map(|l| (l - mean) * (l - mean)).sum();
        (ss / (n * (n - 1.0))).sqrt()
    });
    Ok(RiskEstimate {
        value: mean.clamp(0.0, losses.loss_bound),
        method: Method::Holdout,
        chosen_k: None,
        diagnostics: Diagnostics {
            holdout_se: se,
            ..Diagnostics::default()
        },
    })
}

/// Tie-inclusive neighbor sets of every test site, queried once at the
/// largest k of interest. Any smaller k is read off as a prefix.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    n_val: usize,
    k_max: usize,
    sets: Vec<NeighborSet>,
}

impl NeighborTable {
    pub fn build(val_sites: &SiteSet, test_sites: &SiteSet, k_max: usize) -> Result<Self> {
        val_sites.require_nonempty()?;
        test_sites.require_nonempty()?;
        same_metric(val_sites, test_sites)?;
        let index = NeighborIndex::build(val_sites)?;
        Self::with_index(&index, test_sites, k_max)
    }

    pub fn with_index(val_index: &NeighborIndex, test_sites: &SiteSet, k_max: usize) -> Result<Self> {
        test_sites.require_nonempty()?;
        let sets = val_index.knn_sets(test_sites, k_max)?;
        Ok(NeighborTable {
            n_val: val_index.len(),
            k_max,
            sets,
        })
    }

    pub fn n_val(&self) -> usize {
        self.n_val
    }

    pub fn n_test(&self) -> usize {
        self.sets.len()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_max {
            Err(Error::KOutOfRange { k, n: self.k_max })
        } else {
            Ok(())
        }
    }

    /// k-th order fill distance of the validation sites in the test sites.
    pub fn rho(&self, k: usize) -> Result<f64> {
        self.check_k(k)?;
        Ok(self.sets.iter().map(|s| s.distances[k - 1]).fold(0.0, f64::max))
    }

    /// Neighbor weights: each test site spreads mass `1/M` uniformly over its
    /// tie-inclusive k-neighborhood.
    pub fn weights(&self, k: usize) -> Result<WeightVector> {
        self.check_k(k)?;
        let mut w = vec![0.0; self.n_val];
        for set in &self.sets {
            let size = set.prefix_len(k);
            let share = 1.0 / size as f64;
            for &i in &set.indices[..size] {
                w[i] += share;
            }
        }
        let inv_m = 1.0 / self.sets.len() as f64;
        w.iter_mut().for_each(|x| *x *= inv_m);
        Ok(WeightVector(w))
    }

    pub fn objective(&self, k: usize, config: &EstimatorConfig) -> Result<SnnObjective> {
        let rho_k = self.rho(k)?;
        let weight_l2 = self.weights(k)?.l2_norm();
        Ok(SnnObjective {
            k,
            rho_k,
            weight_l2,
            objective: rho_k + config.hoeffding_constant() * weight_l2,
        })
    }

    /// Objectives for every k in `grid`, in grid order.
    pub fn sweep(&self, grid: &[usize], config: &EstimatorConfig) -> Result<Vec<SnnObjective>> {
        par::map(grid, |&k| self.objective(k, config)).into_iter().collect()
    }
}

/// Smallest objective; ties go to the smallest k (grids are increasing).
fn argmin(objectives: &[SnnObjective]) -> Option<SnnObjective> {
    objectives.iter().copied().fold(None, |best, cur| match best {
        Some(b) if b.objective <= cur.objective => Some(b),
        _ => Some(cur),
    })
}

fn check_pair(losses: &LossSample, val_sites: &SiteSet, test_sites: &SiteSet) -> Result<()> {
    val_sites.require_nonempty()?;
    test_sites.require_nonempty()?;
    same_metric(val_sites, test_sites)?;
    losses.check_aligned(val_sites)
}

pub fn knn_weights(val_sites: &SiteSet, test_sites: &SiteSet, k: usize) -> Result<WeightVector> {
    NeighborTable::build(val_sites, test_sites, k)?.weights(k)
}

fn knn_from_table(
    table: &NeighborTable,
    losses: &LossSample,
    k: usize,
    config: &EstimatorConfig,
) -> Result<RiskEstimate> {
    let w = table.weights(k)?;
    let rho_k = table.rho(k)?;
    let weight_l2 = w.l2_norm();
    let c = config.hoeffding_constant();
    Ok(RiskEstimate {
        value: w.dot(&losses.values).clamp(0.0, losses.loss_bound),
        method: Method::Knn(k),
        chosen_k: Some(k),
        diagnostics: Diagnostics {
            rho_k,
            weight_l2,
            objective: rho_k + c * weight_l2,
            holdout_se: None,
            certified_bound: config.lipschitz.map(|l| l * rho_k + c * weight_l2),
        },
    })
}

/// k-NN weighted average of the validation losses. The reported objective
/// uses `delta = 0.1` and the sample's loss bound.
pub fn knn_estimate(
    losses: &LossSample,
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    k: usize,
) -> Result<RiskEstimate> {
    let config = EstimatorConfig {
        loss_bound: losses.loss_bound,
        ..EstimatorConfig::default()
    };
    knn_estimate_with(losses, val_sites, test_sites, k, &config)
}

pub fn knn_estimate_with(
    losses: &LossSample,
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    k: usize,
    config: &EstimatorConfig,
) -> Result<RiskEstimate> {
    check_pair(losses, val_sites, test_sites)?;
    config.validate()?;
    let table = NeighborTable::build(val_sites, test_sites, k)?;
    knn_from_table(&table, losses, k, config)
}

/// `rho_k + C ||w^k||_2` with `C = Delta sqrt(log(2/delta)/2)`.
pub fn snn_objective(
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    k: usize,
    config: &EstimatorConfig,
) -> Result<SnnObjective> {
    config.validate()?;
    NeighborTable::build(val_sites, test_sites, k)?.objective(k, config)
}

/// SNN on a prebuilt table; `table.k_max` must cover the grid.
pub fn snn_from_table(
    table: &NeighborTable,
    losses: &LossSample,
    config: &EstimatorConfig,
) -> Result<RiskEstimate> {
    let grid = config.resolved_k_grid(table.n_val)?;
    let objectives = table.sweep(&grid, config)?;
    let best = argmin(&objectives).ok_or_else(|| Error::InvalidParameter("empty k grid".into()))?;
    let mut est = knn_from_table(table, losses, best.k, config)?;
    est.method = Method::Snn;
    est.diagnostics.objective = best.objective;
    Ok(est)
}

/// k-NN estimate with k minimising `rho_k + C ||w^k||_2` over the k grid.
pub fn snn_estimate(
    losses: &LossSample,
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    config: &EstimatorConfig,
) -> Result<RiskEstimate> {
    check_pair(losses, val_sites, test_sites)?;
    config.validate()?;
    let grid = config.resolved_k_grid(val_sites.len())?;
    let k_max = *grid.last().expect("validated grid is non-empty");
    let table = NeighborTable::build(val_sites, test_sites, k_max)?;
    snn_from_table(&table, losses, config)
}

/// Holdout, 1NN and SNN estimates computed from one neighbor table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateTriple {
    pub holdout: RiskEstimate,
    pub one_nn: RiskEstimate,
    pub snn: RiskEstimate,
}

pub fn estimate_triple(
    losses: &LossSample,
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    config: &EstimatorConfig,
) -> Result<EstimateTriple> {
    check_pair(losses, val_sites, test_sites)?;
    config.validate()?;
    let grid = config.resolved_k_grid(val_sites.len())?;
    let k_max = grid.last().copied().unwrap_or(1).max(1);
    let table = NeighborTable::build(val_sites, test_sites, k_max)?;
    Ok(EstimateTriple {
        holdout: holdout(losses)?,
        one_nn: knn_from_table(&table, losses, 1, config)?,
        snn: snn_from_table(&table, losses, config)?,
    })
}

/// `max_n Q_test(B(val_n, radius))`: the largest fraction of test sites in a
/// closed ball of `radius` around any validation site.
pub fn max_ball_mass(test_index: &NeighborIndex, val_sites: &SiteSet, radius: f64) -> Result<f64> {
    let counts = test_index.counts_within(val_sites, radius)?;
    let max = counts.into_iter().max().unwrap_or(0);
    Ok(max as f64 / test_index.len() as f64)
}

/// `L rho_k + C sqrt(max_n Q_test(B(val_n, rho_k)) / k)`, the looser of the
/// two k-NN error bounds. Never below `L rho_k + C ||w^k||_2`.
pub fn second_form_bound(
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    k: usize,
    config: &EstimatorConfig,
    lipschitz: f64,
) -> Result<f64> {
    config.validate()?;
    let rho_k = NeighborTable::build(val_sites, test_sites, k)?.rho(k)?;
    let test_index = NeighborIndex::build(test_sites)?;
    let mass = max_ball_mass(&test_index, val_sites, rho_k)?;
    Ok(lipschitz * rho_k + config.hoeffding_constant() * (mass / k as f64).sqrt())
}

/// `L rho_k + C ||w^k||_2`, the k-NN error bound holding with probability
/// at least `1 - delta`.
pub fn first_form_bound(
    val_sites: &SiteSet,
    test_sites: &SiteSet,
    k: usize,
    config: &EstimatorConfig,
    lipschitz: f64,
) -> Result<f64> {
    let o = snn_objective(val_sites, test_sites, k, config)?;
    Ok(lipschitz * o.rho_k + config.hoeffding_constant() * o.weight_l2)
}

/// Explicit SNN error bound in terms of the fill distance of the validation
/// sites in `[0,1]^d` (`gamma = 1/4`, `C_L = max(1, L)`):
/// `sqrt(2) C_L (64 f^(d/(d+2)) + min((f/4)^(d/(d+2)), 1/sqrt(N)) C)`.
/// For `fill >= 1` the trivial bound `L sqrt(d) + C` is returned.
pub fn general_dense_bound(
    fill: f64,
    dim: usize,
    n_val: usize,
    config: &EstimatorConfig,
    lipschitz: f64,
) -> Result<f64> {
    config.validate()?;
    if !(fill >= 0.0) || dim == 0 || n_val == 0 {
        return Err(Error::InvalidParameter(
            "fill must be >= 0 and dim, n_val positive".into(),
        ));
    }
    let c = config.hoeffding_constant();
    if fill >= 1.0 {
        return Ok(lipschitz * (dim as f64).sqrt() + c);
    }
    const GAMMA: f64 = 0.25;
    let e = dim as f64 / (dim as f64 + 2.0);
    let scaled = fill.powf(e);
    let c_l = lipschitz.max(1.0);
    let variance = (GAMMA.powf(e) * scaled).min(1.0 / (n_val as f64).sqrt());
    Ok(2f64.sqrt() * c_l * (4.0 / (GAMMA * GAMMA) * scaled + variance * c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    const C: f64 = 1.223_873_415_340_408_3;

    fn line(xs: &[f64]) -> SiteSet {
        SiteSet::line(xs).unwrap()
    }

    fn tenths() -> SiteSet {
        line(&(1..=10).map(|i| i as f64 / 10.0).collect::<Vec<_>>())
    }

    #[test]
    fn holdout_examples() {
        let e = holdout(&LossSample::new(vec![0.2, 0.4], 1.0).unwrap()).unwrap();
        assert!((e.value - 0.3).abs() < 1e-15);
        let c = holdout(&LossSample::new(vec![0.7; 9], 1.0).unwrap()).unwrap();
        assert!((c.value - 0.7).abs() < 1e-15);
        assert!(c.diagnostics.holdout_se.unwrap() < 1e-15);
        assert!(holdout(&LossSample::new(vec![], 1.0).unwrap()).is_err());
        let single = holdout(&LossSample::new(vec![0.5], 1.0).unwrap()).unwrap();
        assert_eq!(single.diagnostics.holdout_se, None);
    }

    #[test]
    fn holdout_standard_error() {
        // Centred: var = ((0.1)^2 * 2) / 1 over 3 points, se = sqrt(0.02 / 6).
        let e = holdout(&LossSample::new(vec![0.1, 0.2, 0.3], 1.0).unwrap()).unwrap();
        assert!((e.diagnostics.holdout_se.unwrap() - (0.02f64 / 6.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn loss_sample_range() {
        assert!(matches!(
            LossSample::new(vec![0.1, 1.5], 1.0),
            Err(Error::LossOutOfRange { index: 1, .. })
        ));
        assert!(LossSample::new(vec![-0.1], 1.0).is_err());
        assert!(LossSample::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn weights_examples() {
        let val = line(&[0.0, 1.0, 3.0]);
        let test = line(&[0.4, 2.5]);
        assert_eq!(knn_weights(&val, &test, 1).unwrap().as_slice(), &[0.5, 0.0, 0.5]);
        assert_eq!(knn_weights(&val, &test, 2).unwrap().as_slice(), &[0.25, 0.5, 0.25]);
        let tie = knn_weights(&line(&[0.0, 1.0]), &line(&[0.5]), 1).unwrap();
        assert_eq!(tie.as_slice(), &[0.5, 0.5]);
        assert!(matches!(knn_weights(&val, &test, 4), Err(Error::KOutOfRange { .. })));
        let plane = SiteSet::from_points(Metric::euclidean(2), &[[0.0, 0.0]]).unwrap();
        assert!(matches!(knn_weights(&val, &plane, 1), Err(Error::MetricMismatch(..))));
    }

    #[test]
    fn knn_estimate_examples() {
        let val = line(&[0.0, 1.0, 3.0]);
        let test = line(&[0.4, 2.5]);
        let losses = LossSample::new(vec![0.1, 0.5, 0.3], 1.0).unwrap();
        let one = knn_estimate(&losses, &val, &test, 1).unwrap();
        assert!((one.value - 0.2).abs() < 1e-15);
        assert_eq!(one.diagnostics.rho_k, 0.5);
        let two = knn_estimate(&losses, &val, &test, 2).unwrap();
        assert!((two.value - 0.35).abs() < 1e-15);
        assert!((two.diagnostics.rho_k - 1.5).abs() < 1e-15);
        let all = knn_estimate(&losses, &val, &test, 3).unwrap();
        let hold = holdout(&losses).unwrap();
        assert!((all.value - hold.value).abs() < 1e-15);
        let short = LossSample::new(vec![0.1], 1.0).unwrap();
        assert!(matches!(
            knn_estimate(&short, &val, &test, 1),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn snn_objective_examples() {
        let test = line(&[0.0]);
        let cfg = EstimatorConfig::default();
        let o = snn_objective(&tenths(), &test, 4, &cfg).unwrap();
        assert!((o.rho_k - 0.4).abs() < 1e-15);
        assert!((o.weight_l2 - 0.5).abs() < 1e-15);
        assert!((o.objective - 1.011_936_707_670_204_1).abs() < 1e-12);
        let no_var = EstimatorConfig {
            loss_bound: 0.0,
            ..cfg.clone()
        };
        assert_eq!(snn_objective(&tenths(), &test, 4, &no_var).unwrap().objective, o.rho_k);
        let one = snn_objective(&tenths(), &test, 1, &cfg).unwrap();
        assert_eq!(one.weight_l2, 1.0);
        assert!((one.objective - (0.1 + C)).abs() < 1e-12);
    }

    #[test]
    fn snn_picks_four() {
        let test = line(&[0.0]);
        let cfg = EstimatorConfig {
            k_grid: Some(vec![1, 2, 4, 8]),
            lipschitz: Some(1.0),
            ..EstimatorConfig::default()
        };
        let table = NeighborTable::build(&tenths(), &test, 8).unwrap();
        let sweep = table.sweep(&[1, 2, 4, 8], &cfg).unwrap();
        let expected = [1.323_873_415_340_408, 1.065_409_191_301_142_7, 1.011_936_707_670_204_1, 1.232_704_595_650_571_3];
        for (o, e) in sweep.iter().zip(expected) {
            assert!((o.objective - e).abs() < 1e-12, "{o:?}");
        }
        let losses = LossSample::new((1..=10).map(|i| i as f64 / 20.0).collect(), 1.0).unwrap();
        let est = snn_estimate(&losses, &tenths(), &test, &cfg).unwrap();
        assert_eq!(est.chosen_k, Some(4));
        assert_eq!(est.method, Method::Snn);
        assert!((est.value - (0.05 + 0.1 + 0.15 + 0.2) / 4.0).abs() < 1e-15);
        let d = est.diagnostics;
        assert!((d.objective - (d.rho_k + C * d.weight_l2)).abs() < 1e-12);
        assert!((d.certified_bound.unwrap() - d.objective).abs() < 1e-12);
    }

    #[test]
    fn snn_constant_losses() {
        let sites = SiteSet::regular_grid(6, 0.0, 1.0, 2).unwrap();
        let losses = LossSample::new(vec![0.42; sites.len()], 1.0).unwrap();
        let est = snn_estimate(&losses, &sites, &sites, &EstimatorConfig::default()).unwrap();
        assert!((est.value - 0.42).abs() < 1e-12);
    }

    #[test]
    fn snn_argmin_tie_takes_smallest_k() {
        // Two validation sites equidistant from the single test site: k = 1 and
        // k = 2 give identical neighborhoods and objectives.
        let cfg = EstimatorConfig::default();
        let losses = LossSample::new(vec![0.2, 0.6], 1.0).unwrap();
        let est = snn_estimate(&losses, &line(&[-1.0, 1.0]), &line(&[0.0]), &cfg).unwrap();
        assert_eq!(est.chosen_k, Some(1));
        assert!((est.value - 0.4).abs() < 1e-15);
    }

    #[test]
    fn k_grid_validation() {
        let bad = EstimatorConfig {
            k_grid: Some(vec![2, 2]),
            ..EstimatorConfig::default()
        };
        assert!(bad.validate().is_err());
        let big = EstimatorConfig {
            k_grid: Some(vec![1, 64]),
            ..EstimatorConfig::default()
        };
        assert!(matches!(big.resolved_k_grid(10), Err(Error::KOutOfRange { k: 64, n: 10 })));
        assert_eq!(powers_of_two(1), vec![1]);
        assert_eq!(powers_of_two(8), vec![1, 2, 4, 8]);
        assert_eq!(powers_of_two(250), vec![1, 2, 4, 8, 16, 32, 64, 128]);
    }

    #[test]
    fn second_form_examples() {
        let cfg = EstimatorConfig::default();
        let b = second_form_bound(&line(&[0.0, 1.0, 3.0]), &line(&[0.4, 2.5]), 2, &cfg, 1.0).unwrap();
        assert!((b - 2.365_409_191_301_142_7).abs() < 1e-12);
        // Single test site with a unique nearest neighbor.
        let single = second_form_bound(&tenths(), &line(&[0.0]), 1, &cfg, 2.0).unwrap();
        assert!((single - (2.0 * 0.1 + C)).abs() < 1e-12);
        let zero = EstimatorConfig {
            loss_bound: 0.0,
            ..cfg
        };
        assert_eq!(second_form_bound(&tenths(), &line(&[0.3, 0.9]), 3, &zero, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn general_dense_examples() {
        let cfg = EstimatorConfig::default();
        assert_eq!(general_dense_bound(0.0, 2, 100, &cfg, 1.0).unwrap(), 0.0);
        // Golden value from a 40-digit evaluation of the closed form.
        let g = general_dense_bound(0.01, 2, 10_000, &cfg, 1.0).unwrap();
        assert!((g - 9.068_274_983_013_831).abs() < 1e-12);
        let degenerate = general_dense_bound(1.5, 2, 10, &cfg, 1.0).unwrap();
        assert!((degenerate - (2f64.sqrt() + C)).abs() < 1e-12);
        assert!(general_dense_bound(-0.1, 2, 10, &cfg, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
            (2usize..60, 1usize..15).prop_flat_map(|(n, m)| {
                (
                    prop::collection::vec(-1.0f64..1.0, 2 * n),
                    prop::collection::vec(-1.0f64..1.0, 2 * m),
                    prop::collection::vec(0.0f64..1.0, n),
                )
            })
        }

        fn sets(v: Vec<f64>, t: Vec<f64>) -> (SiteSet, SiteSet) {
            (
                SiteSet::new(Metric::euclidean(2), v).unwrap(),
                SiteSet::new(Metric::euclidean(2), t).unwrap(),
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn weights_on_simplex((v, t, _) in instance(), kf in 0.0f64..1.0) {
                let (val, test) = sets(v, t);
                let k = 1 + ((val.len() - 1) as f64 * kf) as usize;
                let w = knn_weights(&val, &test, k).unwrap();
                prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
                prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }

            #[test]
            fn estimates_in_range_and_bounds_ordered((v, t, l) in instance(), lip in 0.0f64..3.0) {
                let (val, test) = sets(v, t);
                let losses = LossSample::new(l, 1.0).unwrap();
                let cfg = EstimatorConfig::default();
                let tri = estimate_triple(&losses, &val, &test, &cfg).unwrap();
                for e in [tri.holdout, tri.one_nn, tri.snn] {
                    prop_assert!((0.0..=1.0).contains(&e.value));
                }
                for k in powers_of_two(val.len()) {
                    let first = first_form_bound(&val, &test, k, &cfg, lip).unwrap();
                    let second = second_form_bound(&val, &test, k, &cfg, lip).unwrap();
                    prop_assert!(first <= second + 1e-12, "k={} {} > {}", k, first, second);
                }
            }

            #[test]
            fn permutation_equivariance((v, t, l) in instance(), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let (val, test) = sets(v, t);
                let losses = LossSample::new(l.clone(), 1.0).unwrap();
                let cfg = EstimatorConfig::default();
                let base = estimate_triple(&losses, &val, &test, &cfg).unwrap();

                let mut perm: Vec<usize> = (0..val.len()).collect();
                perm.shuffle(&mut rng);
                let pv = val.select(&perm);
                let pl = LossSample::new(perm.iter().map(|&i| l[i]).collect(), 1.0).unwrap();
                let mut tperm: Vec<usize> = (0..test.len()).collect();
                tperm.shuffle(&mut rng);
                let pt = test.select(&tperm);
                let moved = estimate_triple(&pl, &pv, &pt, &cfg).unwrap();
                for (a, b) in [(base.holdout, moved.holdout), (base.one_nn, moved.one_nn), (base.snn, moved.snn)] {
                    prop_assert!((a.value - b.value).abs() < 1e-12);
                    prop_assert_eq!(a.chosen_k, b.chosen_k);
                }
            }

            #[test]
            fn isometry_invariance((v, t, _) in instance(), angle in 0.0f64..std::f64::consts::TAU,
                                   shift in -3.0f64..3.0, scale in 0.25f64..4.0, kf in 0.0f64..1.0) {
                let (val, test) = sets(v, t);
                let k = 1 + ((val.len() - 1) as f64 * kf) as usize;
                let (s, c) = angle.sin_cos();
                let motion = |p: &[f64]| vec![scale * (c * p[0] - s * p[1]) + shift, scale * (s * p[0] + c * p[1])];
                let base = knn_weights(&val, &test, k).unwrap();
                let moved = knn_weights(&val.map_points(motion).unwrap(), &test.map_points(motion).unwrap(), k).unwrap();
                // Rounding can break or create exact ties; compare only when
                // the neighborhoods are well separated.
                let table = NeighborTable::build(&val, &test, val.len()).unwrap();
                let separated = table.sets.iter().all(|set| {
                    let r = set.distances[k - 1];
                    set.distances.iter().all(|&d| d == r || (d - r).abs() > 1e-9)
                });
                if separated {
                    for (a, b) in base.as_slice().iter().zip(moved.as_slice()) {
                        prop_assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
