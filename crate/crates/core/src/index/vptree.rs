//! Vantage-point tree for arbitrary metrics (used for haversine sites).
//!
//! Pruning relies on the triangle inequality, which holds for computed
//! great-circle distances only up to rounding, so lower bounds are relaxed by
//! a small absolute slack. The slack only causes extra nodes to be visited.

use super::{DistHeap, LEAF_SIZE};
use crate::geometry::SiteSet;

#[derive(Debug, Clone)]
pub(super) struct VpTree {
    nodes: Vec<Node>,
    slack: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        vantage: usize,
        // Children with the closed range of their distances to the vantage point.
        inner: Option<(usize, f64, f64)>,
        outer: Option<(usize, f64, f64)>,
    },
}

impl VpTree {
    pub(super) fn build(sites: &SiteSet) -> Self {
        let mut tree = VpTree {
            nodes: Vec::new(),
            slack: 0.0,
        };
        let mut items: Vec<usize> = (0..sites.len()).collect();
        let mut max_d: f64 = 0.0;
        tree.build_node(sites, &mut items, &mut max_d);
        tree.slack = 1e-9 * (1.0 + max_d);
        tree
    }

    fn build_node(&mut self, sites: &SiteSet, items: &mut [usize], max_d: &mut f64) -> usize {
        let id = self.nodes.len();
        if items.len() <= LEAF_SIZE {
            self.nodes.push(Node::Leaf(items.to_vec()));
            return id;
        }
        self.nodes.push(Node::Leaf(Vec::new()));
        let vantage = items[0];
        let vp = sites.point(vantage);
        let mut rest: Vec<(f64, usize)> = items[1..]
            .iter()
            .map(|&i| (sites.metric().distance(vp, sites.point(i)), i))
            .collect();
        let mid = rest.len() / 2;
        rest.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let range = |part: &[(f64, usize)]| {
            part.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(d, _)| (lo.min(d), hi.max(d)))
        };
        let (inner_part, outer_part) = rest.split_at(mid);
        let (in_lo, in_hi) = range(inner_part);
        let (out_lo, out_hi) = range(outer_part);
        *max_d = max_d.max(out_hi);
        let mut inner_items: Vec<usize> = inner_part.iter().map(|p| p.1).collect();
        let mut outer_items: Vec<usize> = outer_part.iter().map(|p| p.1).collect();
        let inner = (!inner_items.is_empty())
            .then(|| (self.build_node(sites, &mut inner_items, max_d), in_lo, in_hi));
        let outer = (!outer_items.is_empty())
            .then(|| (self.build_node(sites, &mut outer_items, max_d), out_lo, out_hi));
        self.nodes[id] = Node::Split {
            vantage,
            inner,
            outer,
        };
        id
    }

    #[inline]
    fn lower_bound(&self, d_qv: f64, lo: f64, hi: f64) -> f64 {
        ((d_qv - hi).max(lo - d_qv) - self.slack).max(0.0)
    }

    pub(super) fn knn_radius(&self, sites: &SiteSet, q: &[f64], heap: &mut DistHeap) {
        self.knn_node(0, sites, q, heap);
    }

    fn knn_node(&self, node: usize, sites: &SiteSet, q: &[f64], heap: &mut DistHeap) {
        match &self.nodes[node] {
            Node::Leaf(items) => {
                for &i in items {
                    heap.offer(sites.distance(i, q));
                }
            }
            Node::Split {
                vantage,
                inner,
                outer,
            } => {
                let d_qv = sites.distance(*vantage, q);
                heap.offer(d_qv);
                let mut kids: Vec<(f64, usize)> = [inner, outer]
                    .into_iter()
                    .flatten()
                    .map(|&(c, lo, hi)| (self.lower_bound(d_qv, lo, hi), c))
                    .collect();
                kids.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (lb, c) in kids {
                    if lb <= heap.radius() {
                        self.knn_node(c, sites, q, heap);
                    }
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
        match &self.nodes[node] {
            Node::Leaf(items) => {
                for &i in items {
                    let d = sites.distance(i, q);
                    if d <= radius {
                        f(i, d);
                    }
                }
            }
            Node::Split {
                vantage,
                inner,
                outer,
            } => {
                let d_qv = sites.distance(*vantage, q);
                if d_qv <= radius {
                    f(*vantage, d_qv);
                }
                for &(c, lo, hi) in [inner, outer].into_iter().flatten() {
                    if self.lower_bound(d_qv, lo, hi) <= radius {
                        self.visit_node(c, sites, q, radius, f);
                    }
                }
            }
        }
    }
}
