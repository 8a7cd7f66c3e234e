use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phaseloc_core::{
    build_coherent_povm, build_wh_povm, marginal_q, norm1_report, standard_events, validate_povm,
    CoherentGrid, FiducialVector, Tolerances,
};

fn wh(c: &mut Criterion) {
    let mut g = c.benchmark_group("wh");
    for d in [4, 16, 64] {
        let eta = FiducialVector::lattice_gaussian(d, 0.8).unwrap();
        g.bench_with_input(BenchmarkId::new("build", d), &d, |b, &d| {
            b.iter(|| build_wh_povm(black_box(d), &eta).unwrap())
        });
        let povm = build_wh_povm(d, &eta).unwrap();
        let tol = Tolerances::default();
        g.bench_with_input(BenchmarkId::new("validate", d), &povm, |b, p| {
            b.iter(|| validate_povm(black_box(p), &tol))
        });
        g.bench_with_input(BenchmarkId::new("marginal_q", d), &povm, |b, p| {
            b.iter(|| marginal_q(black_box(p)).unwrap())
        });
    }
    g.finish();
}

fn coherent(c: &mut Criterion) {
    let mut g = c.benchmark_group("coherent");
    g.sample_size(10);
    let tol = Tolerances::truncated();
    let eta = FiducialVector::vacuum(8).unwrap();
    for h in [0.5, 0.25] {
        let grid = CoherentGrid::new(8, 6.0, h).unwrap();
        g.bench_with_input(BenchmarkId::new("build", h), &grid, |b, grid| {
            b.iter(|| build_coherent_povm(black_box(grid), &eta, &tol).unwrap())
        });
    }
    g.finish();
}

fn norm1(c: &mut Criterion) {
    let eta = FiducialVector::lattice_gaussian(8, 0.8).unwrap();
    let povm = build_wh_povm(8, &eta).unwrap();
    let events = standard_events(povm.space(), Some(1)).unwrap();
    c.bench_function("norm1/wh8", |b| {
        b.iter(|| norm1_report(black_box(&povm), &events, 1e-9).unwrap())
    });
}

criterion_group!(benches, wh, coherent, norm1);
criterion_main!(benches);
