use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lcmpc_bench::{circle_states, Fixture};
use lcmpc_core::kernel_cost::{cost_direct, cost_gradient_analytic};
use lcmpc_core::linear_plant::build_prediction_operator;

fn kernel(c: &mut Criterion) {
    let fx = Fixture::reference();
    let x = circle_states(fx.cfg.horizon);
    c.bench_function("cost_direct Hp=200", |b| b.iter(|| cost_direct(black_box(&x), &fx.cfg.lc)));
    c.bench_function("cost_gradient_analytic Hp=200", |b| {
        b.iter(|| cost_gradient_analytic(black_box(&x), &fx.cfg.lc))
    });
}

fn prediction(c: &mut Criterion) {
    let fx = Fixture::reference();
    c.bench_function("build_prediction_operator Hp=200", |b| {
        b.iter(|| build_prediction_operator(black_box(&fx.plant.discrete), fx.cfg.horizon).unwrap())
    });
}

fn controller(c: &mut Criterion) {
    let fx = Fixture::reference();
    let mut g = c.benchmark_group("solve_period");
    g.sample_size(10);
    g.bench_function("cold start", |b| {
        b.iter(|| fx.controller.solve_period(black_box(&fx.x0), &fx.v, None).unwrap())
    });
    let warm = fx.controller.solve_period(&fx.x0, &fx.v, None).unwrap().p_star;
    g.bench_function("warm start", |b| {
        b.iter(|| fx.controller.solve_period(black_box(&fx.x0), &fx.v, Some(&warm)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernel, prediction, controller);
criterion_main!(benches);
