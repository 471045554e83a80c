use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fblab_core::elliptic::harmonic_replacement;
use fblab_core::energy::bernoulli_energy;
use fblab_core::flatness::{extract_free_boundary, hausdorff_estimate};
use fblab_core::solver::{fixture, minimize_bernoulli, Fixture, SolverConfig};
use fblab_core::{Ball, Grid, GridFunction};

fn wedge(h: f64) -> GridFunction {
    let g = Grid::centered(2, 1.25, h).unwrap();
    let f = Fixture::Wedge {
        gamma: 1.5,
        normal: vec![0.0, 1.0],
    };
    fixture(&f, &g).unwrap()
}

fn energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("bernoulli_energy");
    for n in [64u32, 128, 256] {
        let u = wedge(1.0 / n as f64);
        group.throughput(Throughput::Elements(u.grid().len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| bernoulli_energy(black_box(u), &Ball::unit()).unwrap())
        });
    }
    group.finish();
}

fn replacement(c: &mut Criterion) {
    let mut group = c.benchmark_group("harmonic_replacement");
    group.sample_size(10);
    for n in [64u32, 128, 256] {
        let u = wedge(1.0 / n as f64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| harmonic_replacement(black_box(u), &Ball::unit()).unwrap())
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimize_bernoulli");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    for n in [32u32, 64] {
        let g = wedge(1.0 / n as f64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| minimize_bernoulli(black_box(g), &Ball::unit(), &SolverConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn free_boundary(c: &mut Criterion) {
    let mut group = c.benchmark_group("free_boundary");
    let u = wedge(1.0 / 256.0);
    group.bench_function("extract/256", |b| b.iter(|| extract_free_boundary(black_box(&u)).unwrap()));
    let fb = extract_free_boundary(&u).unwrap();
    group.bench_function("box_count/256", |b| {
        b.iter(|| hausdorff_estimate(black_box(&fb), &Ball::unit()).unwrap())
    });
    group.finish();
}

criterion_group!(kernels, energy, replacement, solver, free_boundary);
criterion_main!(kernels);
