//! Rayon-backed buffer paths against the same calls pinned to one thread.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use quake_core::lab::{self, GridAxis, GridSpec, SweepConfig};
use quake_core::nonlin::{self, KernelChoice, SoftmaxParams};
use quake_core::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inputs(n: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
}

fn buffers(c: &mut Criterion) {
    let xs = inputs(1 << 20);
    let mut g = c.benchmark_group("buffer_quake2");
    g.throughput(Throughput::Elements(xs.len() as u64));
    g.bench_function("parallel", |b| {
        b.iter(|| nonlin::exp_buffer(black_box(&xs), KernelChoice::Quake2))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| nonlin::exp_buffer(black_box(&xs), KernelChoice::Quake2)))
    });
    g.finish();

    let cols = 1024;
    let params = SoftmaxParams::default();
    let mut g = c.benchmark_group("softmax_rows");
    g.throughput(Throughput::Elements(xs.len() as u64));
    g.bench_function("parallel", |b| {
        b.iter(|| nonlin::softmax_rows(black_box(&xs), cols, &params, KernelChoice::Quake))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| {
            par::sequential(|| nonlin::softmax_rows(black_box(&xs), cols, &params, KernelChoice::Quake))
        })
    });
    g.finish();
}

fn lab_sweeps(c: &mut Criterion) {
    let kernel = KernelChoice::Quake.natural_exp();
    let cfg = SweepConfig::coarse();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| lab::sweep_kernel(&kernel, -80.0, 80.0, &cfg).unwrap())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| lab::sweep_kernel(&kernel, -80.0, 80.0, &cfg).unwrap()))
    });
    g.finish();

    let spec = GridSpec {
        a0: GridAxis::new(0.32, 0.35, 0.002),
        a1: GridAxis::new(-0.03, 0.0, 0.002),
        a2: GridAxis::new(0.66, 0.69, 0.002),
        mantissa_samples: 256,
        refine: None,
    };
    let mut g = c.benchmark_group("grid_search");
    g.sample_size(10);
    for mode in ["parallel", "sequential"] {
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| {
                if mode == "parallel" {
                    lab::grid_search_quad(&spec).unwrap()
                } else {
                    par::sequential(|| lab::grid_search_quad(&spec).unwrap())
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, buffers, lab_sweeps);
criterion_main!(benches);
