//! Hot kernels under a one-thread pool and the default pool. Build with
//! `--no-default-features` to measure the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cvqkd::channel::{propagate, ChannelParams};
use cvqkd::model::{draw_alice_symbols, ModulationConfig};
use cvqkd::privacy::{compress, seed_length, BinaryKey};
use cvqkd::reconcile::{reconcile, slice_error_probabilities, SliceConfig};
use cvqkd::report::{cmd_fig1, synthetic_frame, RunConfig};
use cvqkd::{par, GaussianSampler};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let mode = if par::is_parallel() { "rayon" } else { "sequential" };
    let mut out = vec![(
        format!("{mode}-1"),
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    let n = rayon::current_num_threads();
    if n > 1 {
        out.push((format!("{mode}-{n}"), rayon::ThreadPoolBuilder::new().build().unwrap()));
    }
    out
}

fn kernels(c: &mut Criterion) {
    let root = GaussianSampler::new(1);
    let modulation = ModulationConfig::coherent(50.0).unwrap();
    let channel = ChannelParams::from_transmission(0.8).unwrap();
    let symbols = draw_alice_symbols(&modulation, 100_000, &root).unwrap();
    let key = BinaryKey::random(100_000, &root.fork(1));
    let seed = BinaryKey::random(seed_length(100_000, 40_000), &root.fork(2));
    let slices = SliceConfig::equiprobable(5).unwrap();
    let frame = synthetic_frame(15.0, 20_000, &root).unwrap();
    let fig = RunConfig {
        fig1_points: 2000,
        ..RunConfig::default()
    };

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("propagate_1e5", &name), |b| {
            b.iter(|| pool.install(|| propagate(black_box(&symbols), &modulation, &channel, &root).unwrap()))
        });
        g.bench_function(BenchmarkId::new("toeplitz_1e5_to_4e4", &name), |b| {
            b.iter(|| pool.install(|| compress(black_box(&key), &seed, 40_000).unwrap()))
        });
        g.bench_function(BenchmarkId::new("slice_errors_sigma15_n5", &name), |b| {
            b.iter(|| pool.install(|| slice_error_probabilities(black_box(15.0), &slices).unwrap()))
        });
        g.bench_function(BenchmarkId::new("reconcile_2e4", &name), |b| {
            b.iter(|| pool.install(|| reconcile(black_box(&frame), &slices, 15.0, &root).unwrap()))
        });
        g.bench_function(BenchmarkId::new("fig1_6x2000", &name), |b| {
            b.iter(|| pool.install(|| cmd_fig1(black_box(&fig)).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
