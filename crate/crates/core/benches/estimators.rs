use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_risk::estimators::{snn_estimate, EstimatorConfig, LossSample, NeighborTable};
use spatial_risk::geometry::kth_order_fill_distance;
use spatial_risk::{Metric, SiteSet};

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> SiteSet {
    SiteSet::new(Metric::euclidean(2), (0..2 * n).map(|_| rng.random()).collect()).unwrap()
}

/// Single-threaded rayon pool vs the default one. Built with
/// `--no-default-features` both variants run the sequential code path.
fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    [("1-thread", one), ("pool", all)]
}

fn bench_snn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let val = uniform(&mut rng, 8000);
    let test = uniform(&mut rng, 2500);
    let losses = LossSample::new((0..8000).map(|_| rng.random()).collect(), 1.0).unwrap();
    let cfg = EstimatorConfig::default();
    let mut g = c.benchmark_group("snn_8000x2500");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("snn_estimate", name), |b| {
            b.iter(|| pool.install(|| snn_estimate(&losses, &val, &test, &cfg).unwrap()))
        });
        g.bench_function(BenchmarkId::new("neighbor_table_k256", name), |b| {
            b.iter(|| pool.install(|| NeighborTable::build(&val, &test, 256).unwrap()))
        });
        g.bench_function(BenchmarkId::new("kth_fill_k64", name), |b| {
            b.iter(|| pool.install(|| kth_order_fill_distance(&val, &test, 64).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_snn);
criterion_main!(benches);
