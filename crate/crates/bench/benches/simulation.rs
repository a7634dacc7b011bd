use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qvar::grid2d::{estimate_separable, simulate_separable, SeparableExpModel};
use qvar::{ModelSpec, Sampler, SimConfig};

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampler");
    group.sample_size(20);
    for n in [200usize, 800] {
        let config = SimConfig::with_alpha(ModelSpec::matern52_with_scale(3.0), n, 1.0, 1);
        group.bench_with_input(BenchmarkId::new("factor", n), &config, |b, cfg| {
            b.iter(|| Sampler::new(black_box(cfg)).unwrap())
        });
        let s = Sampler::new(&config).unwrap();
        group.bench_with_input(BenchmarkId::new("draw", n), &s, |b, s| {
            b.iter(|| s.sample(black_box(3)))
        });
    }
    group.finish();
}

fn separable(c: &mut Criterion) {
    let model = SeparableExpModel {
        sigma2: 1.0,
        theta1: 5.0,
        theta2: 5.0,
        mu: 0.0,
    };
    let step = 1.0 / 15.0;
    c.bench_function("simulate_separable/64x64", |b| {
        b.iter(|| simulate_separable(&model, 64, 64, step, step, 1, black_box(0)).unwrap())
    });
    let grid = simulate_separable(&model, 64, 64, step, step, 1, 0).unwrap();
    c.bench_function("estimate_separable/64x64", |b| {
        b.iter(|| estimate_separable(black_box(&grid)).unwrap())
    });
}

criterion_group!(benches, sampler, separable);
criterion_main!(benches);
