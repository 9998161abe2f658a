use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dromor::ambiguity::worst_case_trace;
use dromor::sdp::DEFAULT_TOL;
use dromor::{
    asymptotic_error_exact, balanced_truncation, reduce_certain, reduce_robust, simulate,
    AmbiguousReductionProblem, ReductionOptions, SymMatrix,
};
use dromor_bench::{chain, four_state, four_state_ball};

fn worst_case(c: &mut Criterion) {
    let ball = four_state_ball();
    c.bench_function("worst_case_trace", |b| {
        b.iter(|| worst_case_trace(black_box(&ball), DEFAULT_TOL).unwrap())
    });
}

fn robust_reduction(c: &mut Criterion) {
    let prob = AmbiguousReductionProblem::new(four_state(), four_state_ball(), 2).unwrap();
    let opts = ReductionOptions::default();
    c.bench_function("reduce_robust/four_state", |b| {
        b.iter(|| reduce_robust(black_box(&prob), &opts).unwrap())
    });
}

fn certain_reduction_by_order(c: &mut Criterion) {
    let mut group = c.benchmark_group("reduce_certain/chain");
    group.sample_size(10);
    let q = SymMatrix::identity(1);
    let opts = ReductionOptions::default();
    for n in [4, 6, 8] {
        let sys = chain(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sys, |b, sys| {
            b.iter(|| reduce_certain(sys, &q, n / 2, &opts).unwrap())
        });
    }
    group.finish();
}

fn baseline(c: &mut Criterion) {
    let sys = four_state();
    let q = four_state_ball().center().clone();
    c.bench_function("balanced_truncation/four_state", |b| {
        b.iter(|| balanced_truncation(black_box(&sys), &q, 2).unwrap())
    });
}

fn validation(c: &mut Criterion) {
    let sys = four_state();
    let q = SymMatrix::from_diagonal(&[1.0, 0.01]);
    let red = balanced_truncation(&sys, &q, 2).unwrap();
    c.bench_function("asymptotic_error_exact", |b| {
        b.iter(|| asymptotic_error_exact(black_box(&sys), &red, &q).unwrap())
    });
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("500x1000", |b| {
        b.iter(|| simulate(&sys, &red, &q, 500, 1000, 0).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    worst_case,
    robust_reduction,
    certain_reduction_by_order,
    baseline,
    validation
);
criterion_main!(benches);
