//! Brute-force references shared by the integration tests: full distance
//! lists, sorted, no index.

#![allow(dead_code)]

use spatial_risk::SiteSet;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

pub fn sorted_dists(cands: &SiteSet, q: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = cands.iter().map(|p| dist(p, q)).collect();
    d.sort_by(f64::total_cmp);
    d
}

pub fn brute_kth_fill(cands: &SiteSet, targets: &SiteSet, k: usize) -> f64 {
    targets.iter().map(|q| sorted_dists(cands, q)[k - 1]).fold(0.0, f64::max)
}

pub fn brute_weights(val: &SiteSet, test: &SiteSet, k: usize) -> Vec<f64> {
    let mut w = vec![0.0; val.len()];
    for q in test.iter() {
        let r = sorted_dists(val, q)[k - 1];
        let members: Vec<usize> = (0..val.len()).filter(|&n| dist(val.point(n), q) <= r).collect();
        for &n in &members {
            w[n] += 1.0 / (test.len() * members.len()) as f64;
        }
    }
    w
}

pub fn brute_snn(losses: &[f64], val: &SiteSet, test: &SiteSet, c: f64) -> (usize, f64) {
    let mut best: Option<(usize, f64, f64)> = None;
    let mut k = 1;
    while k <= val.len() {
        let w = brute_weights(val, test, k);
        let obj = brute_kth_fill(val, test, k) + c * w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let est: f64 = w.iter().zip(losses).map(|(a, b)| a * b).sum();
        if best.is_none_or(|b| obj < b.2) {
            best = Some((k, est, obj));
        }
        k *= 2;
    }
    let (k, est, _) = best.unwrap();
    (k, est)
}
