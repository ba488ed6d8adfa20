use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use multipatch::model::{forward, init_model, ForwardOptions};
use multipatch::rng;
use multipatch::training::{loss_gradients, train, TrainConfig};
use multipatch::uncertainty::mc_forecast;
use multipatch::{Graph, Tensor};
use multipatch_bench::{config, data};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [16usize, 64, 128] {
        let a = Tensor::new(vec![n, n], (0..n * n).map(|i| (i % 7) as f64 - 3.0).collect()).unwrap();
        let b = Tensor::new(vec![n, n], (0..n * n).map(|i| (i % 5) as f64 * 0.5).collect()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut g = Graph::new();
                let (va, vb) = (g.variable(a.clone()), g.variable(b.clone()));
                let c = g.matmul(va, vb).unwrap();
                let loss = g.sum(c);
                g.backward(loss).unwrap();
                g.grad(va)
            })
        });
    }
    group.finish();
}

fn forward_pass(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for (l, h) in [(168usize, 24usize), (336, 96)] {
        let cfg = config(l, h, 16);
        let params = init_model(&cfg, 1).unwrap();
        let d = data(&cfg, l + h + 64);
        let sample = &d.windows[0];
        group.bench_function(BenchmarkId::new("eval", format!("L{l}_H{h}")), |b| {
            b.iter(|| forward(sample, &params, &cfg, &ForwardOptions::eval(), &mut rng::seeded(0)).unwrap())
        });
        group.bench_function(BenchmarkId::new("gradients", format!("L{l}_H{h}")), |b| {
            b.iter(|| loss_gradients(&params, &cfg, sample, &mut rng::seeded(0)).unwrap())
        });
    }
    let cfg = config(336, 96, 16);
    let params = init_model(&cfg, 1).unwrap();
    let d = data(&cfg, 500);
    group.bench_function("mc_dropout_M10", |b| {
        b.iter(|| mc_forecast(&d.windows[0], &params, &cfg, 10, 3).unwrap())
    });
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let cfg = config(168, 24, 16);
    let d = data(&cfg, 168 + 24 + 200);
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        max_epochs: 1,
        patience: 1,
        seed: 0,
        freeze_encoder: false,
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("one_epoch", |b| {
        b.iter_batched(
            || init_model(&cfg, 2).unwrap(),
            |p| train(p, &cfg, d.train(), d.validation(), &tc).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, matmul, forward_pass, training_epoch);
criterion_main!(benches);
