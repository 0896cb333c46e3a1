//! Rayon data-parallel kernels against a single worker.
//!
//! Each kernel runs once on one thread and once on the global pool. Build
//! with `--no-default-features` to time the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leadlag_core::causality::entropy::effective_transfer_entropy;
use leadlag_core::causality::{granger_scan, TeConfig};
use leadlag_core::clustering::{gmm_fit, GmmConfig};
use leadlag_core::market_data::log_returns;
use leadlag_core::par;
use leadlag_core::synth::{generate_synthetic_universe, UniverseSpec};
use leadlag_core::ReturnSeries;

fn universe() -> Vec<ReturnSeries> {
    let series = generate_synthetic_universe(&UniverseSpec::bundled(7)).unwrap();
    series.iter().map(|s| log_returns(s).unwrap()).collect()
}

fn pools() -> [(&'static str, usize); 2] {
    [("one_thread", 1), ("global_pool", 0)]
}

fn bench_granger(c: &mut Criterion) {
    let returns = universe();
    let lags: Vec<usize> = (2..=24).collect();
    let mut g = c.benchmark_group("granger_scan_9x23");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || granger_scan(&returns, &lags, 0.01).unwrap()))
        });
    }
    g.finish();
}

fn bench_ete(c: &mut Criterion) {
    let returns = universe();
    let cfg = TeConfig { n_shuffles: 100, ..TeConfig::default() };
    let mut g = c.benchmark_group("ete_100_shuffles");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || effective_transfer_entropy(&returns[3], &returns[4], 3, &cfg, 1).unwrap())
            })
        });
    }
    g.finish();
}

fn bench_gmm(c: &mut Criterion) {
    let features: Vec<Vec<f64>> =
        (0..300).map(|i| vec![0.01 * (i % 3 + 1) as f64 + 1e-4 * (i as f64).sin(), (i % 7) as f64]).collect();
    let cfg = GmmConfig { n_restarts: 16, ..GmmConfig::default() };
    let mut g = c.benchmark_group("gmm_16_restarts");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || gmm_fit(&features, 3, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_granger, bench_ete, bench_gmm);
criterion_main!(benches);
