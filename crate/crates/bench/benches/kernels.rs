use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dipcert::experiments::InstanceBuilder;
use dipcert::linalg::singular_values;
use dipcert::trainer::{RecordFlags, TrainConfig};
use dipcert::{ActivationKind, Layers, SeededRng, TwoLayerNet, Variant};

fn net(k: usize, layers: Layers) -> TwoLayerNet {
    let mut rng = SeededRng::new(1, 0);
    TwoLayerNet::init(k, 20, 10, layers, ActivationKind::Sigmoid, &mut rng).unwrap()
}

fn forward_and_jacobian(c: &mut Criterion) {
    let mut group = c.benchmark_group("network");
    for k in [200, 2000] {
        let fixed = net(k, Layers::FixedV);
        let both = net(k, Layers::Both);
        group.bench_with_input(BenchmarkId::new("forward", k), &fixed, |b, n| b.iter(|| black_box(n.forward())));
        group.bench_with_input(BenchmarkId::new("jacobian_gram_fixed_v", k), &fixed, |b, n| {
            b.iter(|| black_box(n.jacobian_gram()))
        });
        group.bench_with_input(BenchmarkId::new("jacobian_gram_both", k), &both, |b, n| {
            b.iter(|| black_box(n.jacobian_gram()))
        });
    }
    group.finish();
}

fn svd(c: &mut Criterion) {
    let jac = net(500, Layers::FixedV).jacobian();
    c.bench_function("singular_values_10x10000", |b| b.iter(|| black_box(singular_values(&jac).unwrap())));
}

fn training(c: &mut Criterion) {
    let inst = InstanceBuilder::new(10, 10, 2000, 20).seed(3).build().unwrap();
    let cfg = TrainConfig {
        max_iters: 100,
        loss_threshold: 0.0,
        trace_stride: 100,
        record: RecordFlags::none(),
        ..TrainConfig::default()
    };
    c.bench_function("train_100_iterations_k2000", |b| b.iter(|| black_box(inst.train(&cfg).unwrap())));
    c.bench_function("certify_k2000", |b| b.iter(|| black_box(inst.certify(Variant::Discrete, 0.9).unwrap())));
}

criterion_group!(benches, forward_and_jacobian, svd, training);
criterion_main!(benches);
