use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use quake_core::nonlin::{self, KernelChoice, SoftmaxParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inputs(n: usize, span: f32) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n).map(|_| rng.random_range(-span..span)).collect()
}

fn elementwise(c: &mut Criterion) {
    let xs = inputs(1 << 16, 10.0);
    let mut out = vec![0.0; xs.len()];
    type Op = fn(&[f32], &mut [f32], KernelChoice);
    let ops: [(&str, Op); 3] = [
        ("exp", nonlin::exp_slice_into),
        ("logistic", nonlin::logistic_slice_into),
        ("gelu", nonlin::gelu_slice_into),
    ];
    for (name, op) in ops {
        let mut g = c.benchmark_group(name);
        g.throughput(Throughput::Elements(xs.len() as u64));
        for k in KernelChoice::ALL {
            g.bench_function(BenchmarkId::from_parameter(k), |b| {
                b.iter(|| op(black_box(&xs), black_box(&mut out), k))
            });
        }
        g.finish();
    }
}

fn softmax(c: &mut Criterion) {
    let cols = 1024;
    let xs = inputs(64 * cols, 10.0);
    let mut out = vec![0.0; xs.len()];
    let params = SoftmaxParams::default();
    let mut g = c.benchmark_group("softmax");
    g.throughput(Throughput::Elements(xs.len() as u64));
    for k in KernelChoice::ALL {
        g.bench_function(BenchmarkId::new("fused", k), |b| {
            b.iter(|| {
                for (s, d) in xs.chunks(cols).zip(out.chunks_mut(cols)) {
                    nonlin::softmax_row_into(black_box(s), d, &params, k).unwrap();
                }
            })
        });
        g.bench_function(BenchmarkId::new("unfused", k), |b| {
            b.iter(|| {
                for (s, d) in xs.chunks(cols).zip(out.chunks_mut(cols)) {
                    nonlin::softmax_row_unfused_into(black_box(s), d, &params, k).unwrap();
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, elementwise, softmax);
criterion_main!(benches);
