//! Axis-aligned kd-tree for Euclidean sites.
//!
//! Node pruning uses the distance from the query to the node's bounding box.
//! That distance is computed with the same operation order as the point
//! distance, so rounding can never make it exceed the computed distance of a
//! point inside the box and pruning is exact.

use super::{DistHeap, LEAF_SIZE};
use crate::geometry::SiteSet;

#[derive(Debug, Clone)]
pub(super) struct KdTree {
    perm: Vec<usize>,
    nodes: Vec<Node>,
    // Bounding boxes, `dim` values per node.
    bmin: Vec<f64>,
    bmax: Vec<f64>,
    dim: usize,
}

#[derive(Debug, Clone)]
struct Node {
    lo: usize,
    hi: usize,
    children: Option<(usize, usize)>,
}

impl KdTree {
    pub(super) fn build(sites: &SiteSet) -> Self {
        let dim = sites.dim();
        let mut tree = KdTree {
            perm: (0..sites.len()).collect(),
            nodes: Vec::new(),
            bmin: Vec::new(),
            bmax: Vec::new(),
            dim,
        };
        tree.build_node(sites, 0, sites.len());
        tree
    }

    fn build_node(&mut self, sites: &SiteSet, lo: usize, hi: usize) -> usize {
        let dim = self.dim;
        let mut bmin = vec![f64::INFINITY; dim];
        let mut bmax = vec![f64::NEG_INFINITY; dim];
        for &i in &self.perm[lo..hi] {
            for (a, &c) in sites.point(i).iter().enumerate() {
                bmin[a] = bmin[a].min(c);
                bmax[a] = bmax[a].max(c);
            }
        }
        let (split_axis, extent) = (0..dim)
            .map(|a| (a, bmax[a] - bmin[a]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });

        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, children: None });
        self.bmin.extend_from_slice(&bmin);
        self.bmax.extend_from_slice(&bmax);

        if hi - lo <= LEAF_SIZE || extent <= 0.0 {
            return id;
        }
        let mid = lo + (hi - lo) / 2;
        self.perm[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            sites.point(a)[split_axis]
                .total_cmp(&sites.point(b)[split_axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(sites, lo, mid);
        let right = self.build_node(sites, mid, hi);
        self.nodes[id].children = Some((left, right));
        id
    }

    #[inline]
    fn box_min_dist(&self, node: usize, q: &[f64]) -> f64 {
        let base = node * self.dim;
        let mut acc = 0.0;
        for (a, &x) in q.iter().enumerate() {
            let lo = self.bmin[base + a];
            let hi = self.bmax[base + a];
            let gap = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            acc += gap * gap;
        }
        acc.sqrt()
    }

    #[inline]
    fn box_max_dist(&self, node: usize, q: &[f64]) -> f64 {
        let base = node * self.dim;
        let mut acc = 0.0;
        for (a, &x) in q.iter().enumerate() {
            let gap = (x - self.bmin[base + a]).abs().max((x - self.bmax[base + a]).abs());
            acc += gap * gap;
        }
        acc.sqrt()
    }

    pub(super) fn knn_radius(&self, sites: &SiteSet, q: &[f64], heap: &mut DistHeap) {
        self.knn_node(0, sites, q, heap);
    }

    fn knn_node(&self, node: usize, sites: &SiteSet, q: &[f64], heap: &mut DistHeap) {
        let n = &self.nodes[node];
        match n.children {
            None => {
                for &i in &self.perm[n.lo..n.hi] {
                    heap.offer(sites.distance(i, q));
                }
            }
            Some((l, r)) => {
                let dl = self.box_min_dist(l, q);
                let dr = self.box_min_dist(r, q);
                let (first, df, second, ds) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
                if df <= heap.radius() {
                    self.knn_node(first, sites, q, heap);
                }
                if ds <= heap.radius() {
                    self.knn_node(second, sites, q, heap);
                }
            }
        }
    }

    pub(super) fn visit_within<F: FnMut(usize, f64)>(
        &self,
        sites: &SiteSet,
        q: &[f64],
        radius: f64,
        f: &mut F,
    ) {
        self.visit_node(0, sites, q, radius, f);
    }

    fn visit_node<F: FnMut(usize, f64)>(
        &self,
        node: usize,
        sites: &SiteSet,
        q: &[f64],
        radius: f64,
        f: &mut F,
    ) {
        if self.box_min_dist(node, q) > radius {
            return;
        }
        let n = &self.nodes[node];
        match n.children {
            None => {
                for &i in &self.perm[n.lo..n.hi] {
                    let d = sites.distance(i, q);
                    if d <= radius {
                        f(i, d);
                    }
                }
            }
            Some((l, r)) => {
                self.visit_node(l, sites, q, radius, f);
                self.visit_node(r, sites, q, radius, f);
            }
        }
    }

    pub(super) fn count_within(&self, sites: &SiteSet, q: &[f64], radius: f64) -> usize {
        self.count_node(0, sites, q, radius)
    }

    fn count_node(&self, node: usize, sites: &SiteSet, q: &[f64], radius: f64) -> usize {
        if self.box_min_dist(node, q) > radius {
            return 0;
        }
        let n = &self.nodes[node];
        if self.box_max_dist(node, q) <= radius {
            return n.hi - n.lo;
        }
        match n.children {
            None => self.perm[n.lo..n.hi]
                .iter()
                .filter(|&&i| sites.distance(i, q) <= radius)
                .count(),
            Some((l, r)) => {
                self.count_node(l, sites, q, radius) + self.count_node(r, sites, q, radius)
            }
        }
    }
}
