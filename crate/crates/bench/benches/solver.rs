use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gameshort_bench::{counterexample, sawtooth, transfer_children};
use gameshort_core::counterexample::counterexample_cancel;
use gameshort_core::duality::compute_f;
use gameshort_core::envelope::convex_envelope;
use gameshort_core::shortfall::{solve_shortfall, solve_surface};
use gameshort_core::transfer::{transfer_frontier, transfer_optimize};
use gameshort_core::GridSpec;

fn envelope(c: &mut Criterion) {
    let mut group = c.benchmark_group("convex_envelope");
    for points in [201, 3201] {
        let f = sawtooth(points, 1.0, 0.4);
        group.bench_with_input(BenchmarkId::from_parameter(points), &f, |b, f| {
            b.iter(|| convex_envelope(black_box(f)))
        });
    }
    group.finish();
}

fn transfer(c: &mut Criterion) {
    let children = transfer_children(201);
    let mut group = c.benchmark_group("transfer");
    group.bench_function("bisection", |b| {
        b.iter(|| transfer_optimize(black_box(&children), black_box(0.4)))
    });
    group.bench_function("frontier", |b| {
        b.iter(|| transfer_frontier(black_box(&children), black_box(0.4)))
    });
    group.finish();
}

fn surface(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_surface");
    group.sample_size(10);
    for n in [50, 200] {
        let (lat, payoff) = counterexample(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_surface(&lat, &payoff, GridSpec { points: 201 }))
        });
    }
    group.finish();
}

fn hedge(c: &mut Criterion) {
    let (lat, payoff) = counterexample(100);
    let mut group = c.benchmark_group("solve_shortfall");
    group.sample_size(10);
    group.bench_function("n100_x0.03", |b| {
        b.iter(|| solve_shortfall(&lat, &payoff, 0.03, GridSpec { points: 201 }))
    });
    group.finish();
}

fn dual(c: &mut Criterion) {
    let (lat, _) = counterexample(200);
    let cancel = counterexample_cancel(&lat).unwrap();
    c.bench_function("dual_f_n200", |b| {
        b.iter(|| compute_f(&lat, &cancel, black_box(1.8)))
    });
}

criterion_group!(benches, envelope, transfer, surface, hedge, dual);
criterion_main!(benches);
