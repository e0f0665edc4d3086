//! Metric spaces, site sets and fill distances.
//!
//! The fill distance of a candidate set in a target set is the largest
//! distance from any target to its nearest candidate. The k-th order fill
//! distance replaces "nearest" by "k-th nearest" (counting multiplicity) and
//! is the `rho_k` that drives the nearest-neighbor error bounds.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use crate::error::{Error, Result};
use crate::index::NeighborIndex;
use crate::par;

/// Mean Earth radius in kilometres, for `Metric::Haversine { radius }`.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Distance function on the spatial domain.
///
/// Haversine distances default to the unit sphere (angular distance in
/// radians). Pass `EARTH_RADIUS_KM` to get kilometres. SNN weights do not
/// depend on the scale, but `rho_k` and hence the SNN objective do, so the
/// chosen k changes with the unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Euclidean { dim: usize },
    /// Great-circle distance between `(lat, lon)` pairs given in radians.
    Haversine { radius: f64 },
}

impl Metric {
    pub fn euclidean(dim: usize) -> Self {
        Metric::Euclidean { dim }
    }

    pub fn haversine() -> Self {
        Metric::Haversine { radius: 1.0 }
    }

    pub fn haversine_km() -> Self {
        Metric::Haversine {
            radius: EARTH_RADIUS_KM,
        }
    }

    /// Number of coordinates per point.
    pub fn dim(&self) -> usize {
        match self {
            Metric::Euclidean { dim } => *dim,
            Metric::Haversine { .. } => 2,
        }
    }

    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean { .. } => euclidean(a, b),
            Metric::Haversine { radius } => radius * haversine(a, b),
        }
    }

    fn check_point(&self, p: &[f64]) -> std::result::Result<(), String> {
        if p.len() != self.dim() {
            return Err(format!("expected {} coordinates, got {}", self.dim(), p.len()));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if let Metric::Haversine { .. } = self {
            if p[0].abs() > FRAC_PI_2 {
                return Err(format!("latitude {} outside [-pi/2, pi/2]", p[0]));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        match self {
            Metric::Euclidean { dim: 0 } => Err(Error::InvalidParameter(
                "Euclidean metric needs dim >= 1".into(),
            )),
            Metric::Haversine { radius } if !(radius.is_finite() && *radius > 0.0) => Err(
                Error::InvalidParameter(format!("haversine radius must be positive, got {radius}")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Euclidean { dim } => write!(f, "euclidean(d={dim})"),
            Metric::Haversine { radius } => write!(f, "haversine(r={radius})"),
        }
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn haversine(a: &[f64], b: &[f64]) -> f64 {
    let (lat1, lon1, lat2, lon2) = (a[0], a[1], b[0], b[1]);
    let s_lat = ((lat2 - lat1) * 0.5).sin();
    let s_lon = ((lon2 - lon1) * 0.5).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Ordered collection of sites under a metric, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    coords: Vec<f64>,
    metric: Metric,
}

impl SiteSet {
    /// Build from flat row-major coordinates. Every point is validated against
    /// the metric's coordinate contract.
    pub fn new(metric: Metric, coords: Vec<f64>) -> Result<Self> {
        metric.validate()?;
        let dim = metric.dim();
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        for (index, p) in coords.chunks_exact(dim).enumerate() {
            metric
                .check_point(p)
                .map_err(|reason| Error::InvalidCoordinate { index, reason })?;
        }
        Ok(SiteSet { coords, metric })
    }

    pub fn from_points<P: AsRef<[f64]>>(metric: Metric, points: &[P]) -> Result<Self> {
        let dim = metric.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (index, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::InvalidCoordinate {
                    index,
                    reason: format!("expected {dim} coordinates, got {}", p.len()),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(metric, coords)
    }

    /// Points on the real line.
    pub fn line(xs: &[f64]) -> Result<Self> {
        Self::new(Metric::euclidean(1), xs.to_vec())
    }

    /// Regular grid with `per_axis` equally spaced points per axis on
    /// `[lo, hi]^dim`, endpoints included. The last axis varies fastest.
    pub fn regular_grid(per_axis: usize, lo: f64, hi: f64, dim: usize) -> Result<Self> {
        if per_axis == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point per axis".into()));
        }
        let denom = per_axis.saturating_sub(1).max(1) as f64;
        let total = per_axis.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        for flat in 0..total {
            let mut rem = flat;
            let start = coords.len();
            coords.resize(start + dim, 0.0);
            for axis in (0..dim).rev() {
                coords[start + axis] = lo + (hi - lo) * (rem % per_axis) as f64 / denom;
                rem /= per_axis;
            }
        }
        Self::new(Metric::euclidean(dim), coords)
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim())
    }

    #[inline]
    pub fn distance(&self, i: usize, q: &[f64]) -> f64 {
        self.metric.distance(self.point(i), q)
    }

    /// The first `n` sites.
    pub fn prefix(&self, n: usize) -> SiteSet {
        let n = n.min(self.len());
        SiteSet {
            coords: self.coords[..n * self.dim()].to_vec(),
            metric: self.metric,
        }
    }

    pub fn select(&self, indices: &[usize]) -> SiteSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        SiteSet {
            coords,
            metric: self.metric,
        }
    }

    /// Concatenate site sets sharing a metric.
    pub fn concat(parts: &[&SiteSet]) -> Result<SiteSet> {
        let first = parts.first().ok_or(Error::EmptySiteSet)?;
        let mut coords = Vec::new();
        for p in parts {
            same_metric(first, p)?;
            coords.extend_from_slice(&p.coords);
        }
        Ok(SiteSet {
            coords,
            metric: first.metric,
        })
    }

    /// Apply `f` to every point, keeping the metric.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<SiteSet> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.iter() {
            coords.extend(f(p));
        }
        SiteSet::new(self.metric, coords)
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptySiteSet)
        } else {
            Ok(())
        }
    }
}

pub(crate) fn same_metric(a: &SiteSet, b: &SiteSet) -> Result<()> {
    if a.metric != b.metric {
        return Err(Error::MetricMismatch(a.metric.to_string(), b.metric.to_string()));
    }
    Ok(())
}

/// Fill distance of `candidates` in `targets`: the largest distance from a
/// target to its nearest candidate. Zero iff every target is a candidate.
pub fn fill_distance(candidates: &SiteSet, targets: &SiteSet) -> Result<f64> {
    kth_order_fill_distance(candidates, targets, 1)
}

/// Largest distance from a target to its k-th nearest candidate, with
/// candidates counted with multiplicity.
pub fn kth_order_fill_distance(candidates: &SiteSet, targets: &SiteSet, k: usize) -> Result<f64> {
    candidates.require_nonempty()?;
    targets.require_nonempty()?;
    same_metric(candidates, targets)?;
    let index = NeighborIndex::build(candidates)?;
    kth_order_fill_distance_with(&index, targets, k)
}

/// As [`kth_order_fill_distance`], reusing an index built on the candidates.
pub fn kth_order_fill_distance_with(
    index: &NeighborIndex,
    targets: &SiteSet,
    k: usize,
) -> Result<f64> {
    targets.require_nonempty()?;
    same_metric(index.sites(), targets)?;
    index.check_k(k)?;
    let radii = par::map_indices(targets.len(), |m| index.kth_distance(targets.point(m), k));
    Ok(radii.into_iter().fold(0.0, f64::max))
}

/// Bracket on the fill distance of `sites` in the whole unit cube `[0,1]^d`.
///
/// Evaluated on a regular grid with `per_axis` points per axis. The lower end
/// is the fill distance in the grid; the upper end adds the half-diagonal of a
/// grid cell, since distance-to-a-set is 1-Lipschitz.
pub fn unit_cube_fill_bracket(sites: &SiteSet, per_axis: usize) -> Result<(f64, f64)> {
    let dim = match sites.metric() {
        Metric::Euclidean { dim } => dim,
        m => return Err(Error::MetricMismatch(m.to_string(), "euclidean".into())),
    };
    if per_axis < 2 {
        return Err(Error::InvalidParameter("need at least 2 grid points per axis".into()));
    }
    let grid = SiteSet::regular_grid(per_axis, 0.0, 1.0, dim)?;
    let lower = fill_distance(sites, &grid)?;
    let cell = 1.0 / (per_axis - 1) as f64;
    Ok((lower, lower + 0.5 * cell * (dim as f64).sqrt()))
}

/// Volume of the Euclidean unit ball in `dim` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    // pi^{d/2} / Gamma(d/2 + 1), with Gamma evaluated by the half-integer recursion.
    let half = dim as f64 / 2.0;
    let mut gamma = if dim.is_multiple_of(2) { 1.0 } else { PI.sqrt() / 2.0 };
    let mut x = if dim.is_multiple_of(2) { 1.0 } else { 1.5 };
    while x < half + 1.0 - 1e-9 {
        gamma *= x;
        x += 1.0;
    }
    PI.powf(half) / gamma
}

/// High-probability bound on the fill distance in `[0,1]^d` of `n` i.i.d.
/// sites whose density is at least `density_lower_bound`:
/// `((4^d / (c n V_d)) log(6^d n / (V_d delta)))^(1/d)`.
///
/// Returned as-is even when it exceeds 1; deciding whether it is informative
/// is up to the caller.
pub fn iid_infill_bound(n: usize, dim: usize, density_lower_bound: f64, delta: f64) -> Result<f64> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidParameter("n and dim must be positive".into()));
    }
    if !(density_lower_bound > 0.0) {
        return Err(Error::InvalidParameter("density lower bound must be positive".into()));
    }
    check_delta(delta)?;
    let d = dim as f64;
    let n = n as f64;
    let vol = unit_ball_volume(dim);
    let inner = 4f64.powf(d) / (density_lower_bound * n * vol) * (6f64.powf(d) * n / (vol * delta)).ln();
    Ok(inner.max(0.0).powf(1.0 / d))
}

/// Error bound for 1NN (and SNN up to `max(1, L)`) when the test sites form a
/// regular grid of `n_test` points:
/// `L rho + Delta sqrt(log(2/delta)/2) sqrt(max(2^d / M, (8 rho)^d))`.
pub fn grid_prediction_bound(
    rho1: f64,
    dim: usize,
    n_test: usize,
    delta: f64,
    lipschitz: f64,
    loss_bound: f64,
) -> Result<f64> {
    if n_test == 0 || dim == 0 {
        return Err(Error::InvalidParameter("n_test and dim must be positive".into()));
    }
    check_delta(delta)?;
    let d = dim as i32;
    let c = loss_bound * (0.5 * (2.0 / delta).ln()).sqrt();
    let mass = (2f64.powi(d) / n_test as f64).max((8.0 * rho1).powi(d));
    Ok(lipschitz * rho1 + c * mass.sqrt())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")))
    }
}
