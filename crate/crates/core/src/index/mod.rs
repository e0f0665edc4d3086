//! Exact, tie-inclusive neighbor queries over a frozen site set.
//!
//! A k-nearest-neighbor query returns every site whose distance is at most
//! the k-th smallest distance, so the set can hold more than k sites when
//! several are equidistant. Ties are detected by exact floating-point
//! equality of computed distances, which makes results identical to a linear
//! scan using the same metric.

mod kdtree;
mod vptree;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{same_metric, Metric, SiteSet};
use crate::par;

use kdtree::KdTree;
use vptree::VpTree;

const LEAF_SIZE: usize = 16;

/// Tie-inclusive neighbor set of a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    /// Indices into the indexed sites, sorted by `(distance, index)`.
    pub indices: Vec<usize>,
    /// Distances aligned with `indices`.
    pub distances: Vec<f64>,
    /// Distance to the k-th nearest site (the neighborhood radius).
    pub radius: f64,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of leading entries forming the tie-inclusive `k`-neighborhood,
    /// for any `k` up to the `k` this set was queried with.
    pub fn prefix_len(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.len());
        let r = self.distances[k - 1];
        k + self.distances[k..].iter().take_while(|&&d| d == r).count()
    }
}

#[derive(Debug, Clone)]
enum Tree {
    Kd(KdTree),
    Vp(VpTree),
}

/// Immutable spatial index over a site set.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    sites: SiteSet,
    tree: Tree,
}

impl NeighborIndex {
    pub fn build(sites: &SiteSet) -> Result<Self> {
        sites.require_nonempty()?;
        let tree = match sites.metric() {
            Metric::Euclidean { .. } => Tree::Kd(KdTree::build(sites)),
            Metric::Haversine { .. } => Tree::Vp(VpTree::build(sites)),
        };
        Ok(NeighborIndex {
            sites: sites.clone(),
            tree,
        })
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.len() {
            Err(Error::KOutOfRange { k, n: self.len() })
        } else {
            Ok(())
        }
    }

    fn check_query(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.sites.dim() {
            return Err(Error::InvalidCoordinate {
                index: 0,
                reason: format!("query has {} coordinates, index has {}", q.len(), self.sites.dim()),
            });
        }
        Ok(())
    }

    /// Distance from `q` to its k-th nearest site. `k` must be in range.
    pub fn kth_distance(&self, q: &[f64], k: usize) -> f64 {
        let mut heap = DistHeap::new(k);
        match &self.tree {
            Tree::Kd(t) => t.knn_radius(&self.sites, q, &mut heap),
            Tree::Vp(t) => t.knn_radius(&self.sites, q, &mut heap),
        }
        heap.radius()
    }

    /// Tie-inclusive k-nearest neighbors of `q`.
    pub fn knn_set(&self, q: &[f64], k: usize) -> Result<NeighborSet> {
        self.check_k(k)?;
        self.check_query(q)?;
        Ok(self.knn_set_unchecked(q, k))
    }

    fn knn_set_unchecked(&self, q: &[f64], k: usize) -> NeighborSet {
        let radius = self.kth_distance(q, k);
        let mut hits = self.within(q, radius);
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let (indices, distances) = hits.into_iter().unzip();
        NeighborSet {
            indices,
            distances,
            radius,
        }
    }

    /// All sites within the closed ball of `radius` around `q`, unsorted.
    pub fn within(&self, q: &[f64], radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut push = |i, d| out.push((i, d));
        match &self.tree {
            Tree::Kd(t) => t.visit_within(&self.sites, q, radius, &mut push),
            Tree::Vp(t) => t.visit_within(&self.sites, q, radius, &mut push),
        }
        out
    }

    /// Number of sites at distance `<= radius` from `q`.
    pub fn count_within(&self, q: &[f64], radius: f64) -> usize {
        match &self.tree {
            Tree::Kd(t) => t.count_within(&self.sites, q, radius),
            Tree::Vp(t) => {
                let mut n = 0;
                t.visit_within(&self.sites, q, radius, &mut |_, _| n += 1);
                n
            }
        }
    }

    /// Tie-inclusive k-NN sets for every query site, in query order.
    pub fn knn_sets(&self, queries: &SiteSet, k: usize) -> Result<Vec<NeighborSet>> {
        self.check_k(k)?;
        same_metric(&self.sites, queries)?;
        Ok(par::map_indices(queries.len(), |m| {
            self.knn_set_unchecked(queries.point(m), k)
        }))
    }

    /// `count_within` for every query site with a shared radius.
    pub fn counts_within(&self, queries: &SiteSet, radius: f64) -> Result<Vec<usize>> {
        same_metric(&self.sites, queries)?;
        Ok(par::map_indices(queries.len(), |m| {
            self.count_within(queries.point(m), radius)
        }))
    }
}

/// Bounded max-heap of the k smallest distances seen so far.
pub(crate) struct DistHeap {
    k: usize,
    heap: BinaryHeap<OrdF64>,
}

#[derive(PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl DistHeap {
    fn new(k: usize) -> Self {
        DistHeap {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn radius(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |d| d.0)
        }
    }

    #[inline]
    fn offer(&mut self, d: f64) {
        if self.heap.len() < self.k {
            self.heap.push(OrdF64(d));
        } else if d < self.radius() {
            self.heap.pop();
            self.heap.push(OrdF64(d));
        }
    }
}
