use std::hint::black_box;

use chmob::fespace::FeSpace;
use chmob::initial::spinodal;
use chmob::mesh::StructuredMesh;
use chmob::mobility::{element_mobility_g, element_mobility_j, Truncation};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::{ThreadPool, ThreadPoolBuilder};

fn single_thread() -> ThreadPool {
    ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool")
}

fn mobility(c: &mut Criterion) {
    let seq = single_thread();
    let tr = Truncation::new(1e-8).unwrap();
    let mut group = c.benchmark_group("element_mobility");
    for n in [64, 128, 256] {
        let mesh = StructuredMesh::grid(n, n).unwrap();
        let phi = spinodal(&mesh, 0.4, 1).unwrap();
        let expected = element_mobility_g(&mesh, &phi, &tr).unwrap();
        assert_eq!(seq.install(|| element_mobility_g(&mesh, &phi, &tr).unwrap()), expected);

        group.bench_with_input(BenchmarkId::new("G/seq", n), &n, |b, _| {
            b.iter(|| seq.install(|| element_mobility_g(black_box(&mesh), &phi, &tr).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("G/rayon", n), &n, |b, _| {
            b.iter(|| element_mobility_g(black_box(&mesh), &phi, &tr).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("J/seq", n), &n, |b, _| {
            b.iter(|| seq.install(|| element_mobility_j(black_box(&mesh), &phi, &tr).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("J/rayon", n), &n, |b, _| {
            b.iter(|| element_mobility_j(black_box(&mesh), &phi, &tr).unwrap())
        });
    }
    group.finish();
}

fn stiffness(c: &mut Criterion) {
    let seq = single_thread();
    let tr = Truncation::new(1e-8).unwrap();
    let mut group = c.benchmark_group("weighted_stiffness");
    for n in [64, 128, 256] {
        let mesh = StructuredMesh::grid(n, n).unwrap();
        let space = FeSpace::new(&mesh);
        let phi = spinodal(&mesh, 0.4, 2).unwrap();
        let coeff = element_mobility_g(&mesh, &phi, &tr).unwrap();
        let mut out = space.stiffness(Some(&coeff)).unwrap();

        group.bench_with_input(BenchmarkId::new("seq", n), &n, |b, _| {
            b.iter(|| seq.install(|| space.stiffness_into(&mut out, black_box(&coeff)).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("rayon", n), &n, |b, _| {
            b.iter(|| space.stiffness_into(&mut out, black_box(&coeff)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mobility, stiffness);
criterion_main!(benches);
