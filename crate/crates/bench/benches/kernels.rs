use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pffc_bench::{example1, ramp};
use pffc_core::forms::{jacobian_a, residual_a};
use pffc_core::forward::step_state;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [16, 32, 64] {
        let p = example1(n, 1);
        let q = ramp(&p);
        group.bench_with_input(BenchmarkId::new("residual", n), &n, |b, _| {
            b.iter(|| residual_a(&p.disc, &p.params, &q, &p.initial))
        });
        group.bench_with_input(BenchmarkId::new("jacobian", n), &n, |b, _| {
            b.iter(|| jacobian_a(&p.disc, &p.params, &p.initial))
        });
    }
    group.finish();
}

fn forward_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_step");
    group.sample_size(10);
    for n in [16, 32] {
        let p = example1(n, 20);
        let q = ramp(&p);
        let dt = p.times[1] - p.times[0];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| step_state(&p.disc, &p.params, 1, dt, &q, &p.initial, &p.newton).expect("step converges"))
        });
    }
    group.finish();
}

fn hessian_vector(c: &mut Criterion) {
    let mut group = c.benchmark_group("hessian_vector");
    group.sample_size(10);
    let p = example1(16, 10);
    let q = ramp(&p);
    let (eval, z, _) = p.evaluate(&q).expect("forward and adjoint solve");
    let ctx = p.context(&q, &eval.trajectory).expect("factorizations");
    let dq = ramp(&p);
    group.bench_function("n16_m10", |b| b.iter(|| p.hessian_vector(&ctx, &z, &dq).expect("sweeps")));
    group.finish();
}

criterion_group!(benches, assembly, forward_step, hessian_vector);
criterion_main!(benches);
