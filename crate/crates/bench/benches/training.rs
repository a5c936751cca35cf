use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gksvm_bench::molecule_like;
use gksvm_core::trainer::{backward, full_forward, predict_graphs, embed_graphs, ModelParams, TrainConfig};

fn epoch(c: &mut Criterion) {
    let mut group = c.benchmark_group("epoch forward+backward");
    group.sample_size(10);
    for n in [50, 100, 200] {
        let (graphs, classes) = molecule_like(n, 18, 7, 4);
        let mut params = ModelParams::init(&TrainConfig::default(), 7, n).unwrap();
        params.svm.alpha = (0..n).map(|i| if i % 3 == 0 { 0.01 } else { -0.005 }).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let fwd = full_forward(&params, &graphs, &classes, 7).unwrap();
                backward(&params, &fwd)
            })
        });
    }
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict 10 graphs");
    let (test, _) = molecule_like(10, 18, 7, 5);
    for n in [50, 100, 200] {
        let (graphs, _) = molecule_like(n, 18, 7, 6);
        let mut params = ModelParams::init(&TrainConfig::default(), 7, n).unwrap();
        params.svm.alpha = vec![0.01; n];
        let train_sets = embed_graphs(&params, &graphs, 7).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| predict_graphs(&params, &train_sets, &test, 7).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, epoch, prediction);
criterion_main!(benches);
