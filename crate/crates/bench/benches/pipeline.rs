//! Benchmarks for the stages of the solver pipeline: point ordering, block
//! compression, assembly, factorization, solves, and the dense comparison
//! point. Sample counts are kept low; these are for tracking regressions,
//! not statistics.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gphodlr::dense::{dense_assemble, dense_factorize};
use gphodlr::kernels::eval_kernel;
use gphodlr::{aca_compress, assemble, factorize, kd_sort, KernelFamily, KernelSpec};
use gphodlr_bench::gaussian_fixture;
use nalgebra::DVector;
use std::hint::black_box;

fn bench_kd_sort(c: &mut Criterion) {
    let coords = gphodlr::geometry::uniform_points(65536, 3, 3.0, 1);
    c.bench_function("kd_sort/n=65536/dim=3", |b| {
        b.iter(|| kd_sort(black_box(&coords), 3, 20).unwrap())
    });
}

fn bench_aca_block(c: &mut Criterion) {
    let spec = KernelSpec::new(KernelFamily::Gaussian, 0.0).unwrap();
    let rows: Vec<f64> = (0..512).map(|i| -3.0 + 2.9 * (i as f64) / 511.0).collect();
    let cols: Vec<f64> = (0..512).map(|j| 0.1 + 2.9 * (j as f64) / 511.0).collect();
    c.bench_function("aca/gaussian-block/512x512", |b| {
        b.iter(|| {
            aca_compress(
                |i, j| {
                    eval_kernel(
                        &spec,
                        std::slice::from_ref(&rows[i]),
                        std::slice::from_ref(&cols[j]),
                    )
                    .unwrap()
                },
                512,
                512,
                1e-12,
                256,
                7,
            )
            .unwrap()
        })
    });
}

fn bench_pipeline_stages(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for &n in &[4096usize, 16384] {
        let (spec, pts) = gaussian_fixture(n, 11);
        group.bench_with_input(BenchmarkId::new("assemble", n), &n, |b, _| {
            b.iter(|| assemble(&spec, &pts, 1e-12, 20).unwrap())
        });
        let tree = assemble(&spec, &pts, 1e-12, 20).unwrap();
        group.bench_with_input(BenchmarkId::new("factorize", n), &n, |b, _| {
            b.iter(|| factorize(&tree).unwrap())
        });
        let fact = factorize(&tree).unwrap();
        let rhs = DVector::from_fn(n, |i, _| ((i as f64) * 0.37).sin());
        group.bench_with_input(BenchmarkId::new("solve", n), &n, |b, _| {
            b.iter(|| fact.solve_vector(black_box(&rhs)).unwrap())
        });
    }
    group.finish();
}

fn bench_dense_reference(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense");
    group.sample_size(10);
    let (spec, pts) = gaussian_fixture(1024, 13);
    let dense = dense_assemble(&spec, &pts).unwrap();
    group.bench_function("factorize/n=1024", |b| {
        b.iter(|| dense_factorize(&dense).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_kd_sort,
    bench_aca_block,
    bench_pipeline_stages,
    bench_dense_reference
);
criterion_main!(benches);
