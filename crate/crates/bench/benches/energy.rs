use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sbm_bench::Fixture;
use sbm_core::optimizer::{multi_start, OptimizerOptions};

fn energy_and_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy_and_gradient");
    for &(n, m) in &[(2, 20), (6, 20), (6, 60), (12, 60)] {
        let fx = Fixture::new(n, m);
        let functional = fx.functional();
        let x = fx.state.to_params();
        let mut grad = vec![0.0; x.len()];
        group.bench_with_input(BenchmarkId::from_parameter(format!("N{n}_M{m}")), &x, |b, x| {
            b.iter(|| functional.energy_and_gradient(black_box(x), &mut grad).unwrap())
        });
    }
    group.finish();
}

fn small_multi_start(c: &mut Criterion) {
    let fx = Fixture::new(4, 10);
    let opts = OptimizerOptions {
        n_states: 4,
        n_starts: 4,
        ..OptimizerOptions::default()
    };
    c.bench_function("multi_start_N4_M10", |b| {
        b.iter(|| multi_start(&fx.params, &fx.bath, black_box(&opts)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = energy_and_gradient, small_multi_start
}
criterion_main!(benches);
