use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use impact_core::estimators::{estimate_all, LagGrid};
use impact_core::hdim::{calibrate_hdim, predict_d_hdim};
use impact_core::sim::{generate_synthetic, SignLaw, SyntheticConfig};
use impact_core::tim::{CalibrationOptions, NoiseModel};
use impact_core::Tape;

/// Thread pools to measure under; without the `parallel` feature the core runs sequentially
/// whatever the pool, so a single entry suffices.
fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let single = || rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    if cfg!(feature = "parallel") {
        vec![
            ("rayon", rayon::ThreadPoolBuilder::new().build().unwrap()),
            ("rayon-1-thread", single()),
        ]
    } else {
        vec![("sequential", single())]
    }
}

fn tape() -> Tape {
    let mut cfg = SyntheticConfig::new(1 << 18, 7);
    cfg.n_sessions = 4;
    cfg.sign_law = SignLaw::LongMemory { gamma: 0.5 };
    Tape::from(&generate_synthetic(&cfg).unwrap().stream)
}

fn estimators(c: &mut Criterion) {
    let tape = tape();
    let grid = LagGrid::new(64).unwrap();
    let mut group = c.benchmark_group("estimate_all");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &pool, |b, pool| {
            b.iter(|| pool.install(|| black_box(estimate_all(&tape, grid).unwrap())))
        });
    }
    group.finish();
}

fn diffusion(c: &mut Criterion) {
    let est = estimate_all(&tape(), LagGrid::new(64).unwrap()).unwrap();
    let kernels = calibrate_hdim(&est.correlations, &est.returns, &est.stats, 32, CalibrationOptions::default()).unwrap();
    let noise = NoiseModel::new(0.01, 0.0).unwrap();
    let mut group = c.benchmark_group("predict_d_hdim");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &pool, |b, pool| {
            b.iter(|| pool.install(|| black_box(predict_d_hdim(&kernels, &est.correlations, noise, 64).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, estimators, diffusion);
criterion_main!(benches);
