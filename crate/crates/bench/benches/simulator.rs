use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use unifed_bench::{mixture, partitioned};
use unifed_core::{
    gradient, init_weights, loss_slope, partition, Algorithm, Batch, DynamicConfig,
    FederationConfig, LossTrace, ModelSpec, NoopObserver, PartitionPlan, Scenario,
};

fn bench_gradient(c: &mut Criterion) {
    let spec = ModelSpec::softmax(16, 23);
    let w = init_weights(spec, 1);
    let (ds, _) = mixture(20, 3);
    let batch = Batch::new(&ds.features()[..64 * 16], &ds.labels()[..64], 16);
    c.bench_function("gradient_softmax_64x16x23", |b| {
        b.iter(|| gradient(black_box(&w), black_box(&batch)).unwrap())
    });

    let mlp = ModelSpec::mlp(16, 32, 23);
    let wm = init_weights(mlp, 1);
    c.bench_function("gradient_mlp_64x16x32x23", |b| {
        b.iter(|| gradient(black_box(&wm), black_box(&batch)).unwrap())
    });
}

fn bench_loss_slope(c: &mut Criterion) {
    let trace = LossTrace::new((0..10_000).map(|i| 3.0 - (i as f64) * 1e-4).collect());
    c.bench_function("loss_slope_10k", |b| {
        b.iter(|| loss_slope(black_box(&trace)).unwrap())
    });
}

fn bench_partition(c: &mut Criterion) {
    let (ds, _) = mixture(200, 5);
    let plan = PartitionPlan {
        scenario: Scenario::StronglyNonIid {
            dirichlet_beta: 0.3,
        },
        hospitals_per_task: 8,
        server_fraction: 0.05,
        split_fractions: [0.7, 0.1, 0.2],
    };
    c.bench_function("partition_strong_24h", |b| {
        b.iter(|| partition(black_box(&ds), black_box(&plan), 7).unwrap())
    });
}

fn bench_unifed_round(c: &mut Criterion) {
    let (hospitals, server, map) = partitioned(40, 2, 9);
    let spec = ModelSpec::softmax(16, map.total_classes());
    let cfg = FederationConfig {
        algorithm: Algorithm::UniFed,
        num_rounds: 1,
        dynamic: DynamicConfig {
            strip_local: 2,
            strip_global: 2,
            max_epochs: 4,
            lr: 0.05,
            ..DynamicConfig::default()
        },
        seed: 2,
        ..FederationConfig::default()
    };
    c.bench_function("unifed_one_round_6h", |b| {
        b.iter_batched(
            || (hospitals.clone(), server.clone()),
            |(h, s)| unifed_core::run_unifed(&cfg, spec, &h, &s, &mut NoopObserver).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_gradient,
    bench_loss_slope,
    bench_partition,
    bench_unifed_round
);
criterion_main!(benches);
