use std::hint::black_box;

use binotab::combinatorics::{rank, sample_random, total_combinations, unrank};
use binotab::losses::{ensemble_gradient, BatchMask};
use binotab::nn::ForwardCache;
use binotab::{ArchitectureKind, EnsembleLossConfig};
use binotab_bench::{batch, matrix, network};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_bigint::BigUint;

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for (m, k, n) in [(1000, 2, 256), (1000, 14, 256), (1000, 256, 1024), (1000, 20000, 1)] {
        let a = matrix(m, k, 1);
        let b = matrix(n, k, 2);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{k}x{n}")), &(a, b), |bench, (a, b)| {
            bench.iter(|| a.matmul_transposed(b).unwrap())
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_backward");
    g.sample_size(10);
    for (kind, features) in [
        (ArchitectureKind::Proposed, 8),
        (ArchitectureKind::Proposed, 14),
        (ArchitectureKind::PropEns, 14),
        (ArchitectureKind::Mlp, 14),
    ] {
        let net = network(kind, features);
        let (x, _) = batch(1000, features, 3);
        let up = matrix(1000, net.output_units(), 4);
        let mut cache = ForwardCache::new();
        g.bench_function(format!("{kind}/{features}"), |bench| {
            bench.iter(|| {
                net.forward_into(&x, &mut cache).unwrap();
                black_box(net.backward_params(&cache, &up).unwrap())
            })
        });
    }
    g.finish();
}

fn combinations(c: &mut Criterion) {
    let mut g = c.benchmark_group("combinatorics");
    let total = total_combinations(64).unwrap();
    let r: BigUint = &total / 3u32;
    let comb = unrank(64, &r).unwrap();
    g.bench_function("unrank/64", |b| b.iter(|| unrank(64, black_box(&r)).unwrap()));
    g.bench_function("rank/64", |b| b.iter(|| rank(64, black_box(&comb)).unwrap()));
    g.bench_function("sample_random/14x20000", |b| b.iter(|| sample_random(14, 20000, 5).unwrap()));
    g.finish();
}

fn losses(c: &mut Criterion) {
    let mut g = c.benchmark_group("ensemble_gradient");
    let (_, labels) = batch(1000, 2, 6);
    let outputs = matrix(1000, 1024, 7);
    let mask = BatchMask::keep_all(1000, 1024);
    for (name, cfg) in [
        ("boosting", EnsembleLossConfig::default()),
        ("bagging", EnsembleLossConfig {
            aggregation: binotab::Aggregation::Bagging,
            ..EnsembleLossConfig::default()
        }),
    ] {
        g.bench_function(name, |b| b.iter(|| ensemble_gradient(&outputs, &labels, &cfg, &mask).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, matmul, train_step, combinations, losses);
criterion_main!(benches);
