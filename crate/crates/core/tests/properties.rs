use proptest::prelude::*;
use quake_core::nonlin::{self, reference, KernelChoice, SoftmaxParams};
use quake_core::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inputs(seed: u64, n: usize, span: f32) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-span..span)).collect()
}

fn linf(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}

/// Max relative deviation, for ops whose outputs span many magnitudes.
fn rel_inf(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(_, y)| **y != 0.0)
        .map(|(x, y)| ((*x as f64 - *y as f64) / *y as f64).abs())
        .fold(0.0, f64::max)
}

#[test]
fn second_order_is_tighter_for_every_op() {
    let xs = inputs(1, 100_000, 10.0);
    type Op = fn(&[f32], KernelChoice) -> quake_core::NumericBuffer;
    type Dist = fn(&[f32], &[f32]) -> f64;
    let ops: [(&str, Op, Dist); 3] = [
        ("exp", nonlin::exp_buffer, rel_inf),
        ("logistic", nonlin::logistic_buffer, linf),
        ("gelu", nonlin::gelu_buffer, linf),
    ];
    for (name, op, dist) in ops {
        let exact = op(&xs, KernelChoice::Exact);
        let d1 = dist(&op(&xs, KernelChoice::Quake), &exact);
        let d2 = dist(&op(&xs, KernelChoice::Quake2), &exact);
        assert!(d2 < d1, "{name}: quake2 {d2} vs quake {d1}");
    }
    let cols = 100;
    let p = SoftmaxParams::default();
    let exact = nonlin::softmax_rows(&xs, cols, &p, KernelChoice::Exact).unwrap();
    let d1 = linf(&nonlin::softmax_rows(&xs, cols, &p, KernelChoice::Quake).unwrap(), &exact);
    let d2 = linf(&nonlin::softmax_rows(&xs, cols, &p, KernelChoice::Quake2).unwrap(), &exact);
    assert!(d2 < d1, "softmax: quake2 {d2} vs quake {d1}");
}

#[test]
fn exp_errors_within_published_bounds() {
    let xs = inputs(2, 200_000, 80.0);
    let exact: Vec<f32> = xs.iter().map(|&x| reference::exact_exp(x)).collect();
    assert!(rel_inf(&nonlin::exp_buffer(&xs, KernelChoice::Quake), &exact) <= 0.031);
    assert!(rel_inf(&nonlin::exp_buffer(&xs, KernelChoice::Quake2), &exact) <= 0.0035);
}

fn ulps(a: f32, b: f32) -> i64 {
    (a.to_bits() as i64 - b.to_bits() as i64).abs()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    // shifts are multiples of 1 and rows multiples of 1/64, so v + c is exact
    #[test]
    fn softmax_shift_invariance(
        raw in proptest::collection::vec(-640i32..640, 1..300),
        c in -200i32..200,
        t in prop_oneof![Just(0.25f32), Just(1.0), Just(4.0)],
    ) {
        let v: Vec<f32> = raw.iter().map(|&k| k as f32 / 64.0).collect();
        let w: Vec<f32> = v.iter().map(|&x| x + c as f32).collect();
        let p = SoftmaxParams::new(t).unwrap();
        let a = nonlin::softmax_row(&v, &p, KernelChoice::Exact).unwrap();
        let b = nonlin::softmax_row(&w, &p, KernelChoice::Exact).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!(ulps(*x, *y) <= 2, "{} vs {}", x, y);
        }
        for k in [KernelChoice::Quake, KernelChoice::Quake2] {
            let a = nonlin::softmax_row(&v, &p, k).unwrap();
            let b = nonlin::softmax_row(&w, &p, k).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() <= 1e-5, "{}: {} vs {}", k, x, y);
            }
        }
    }

    #[test]
    fn softmax_outputs_are_probabilities(
        v in proptest::collection::vec(-1e3f32..1e3, 1..2000),
        t in 0.01f32..10.0,
    ) {
        let p = SoftmaxParams::new(t).unwrap();
        for k in KernelChoice::ALL {
            let y = nonlin::softmax_row(&v, &p, k).unwrap();
            let s: f64 = y.iter().map(|&x| x as f64).sum();
            prop_assert!(y.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((s - 1.0).abs() <= 4.0 * v.len() as f64 * f32::EPSILON as f64);
        }
    }

    #[test]
    fn logistic_is_bounded_and_monotone(a in -90f32..90.0, b in -90f32..90.0) {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        for k in KernelChoice::ALL {
            let (lx, ly) = (nonlin::logistic(x, k), nonlin::logistic(y, k));
            prop_assert!((0.0..=1.0).contains(&lx) && lx <= ly);
        }
    }
}

#[test]
fn clamped_softmax_entries_are_negligible() {
    let mut v = vec![-1e6f32; 1000];
    v[3] = 5.0;
    v[500] = 4.0;
    for t in [0.25f32, 1.0, 4.0] {
        let p = SoftmaxParams::new(t).unwrap();
        for k in KernelChoice::ALL {
            let y = nonlin::softmax_row(&v, &p, k).unwrap();
            assert!(y.iter().all(|x| x.is_finite()));
            for (i, &x) in y.iter().enumerate() {
                if i != 3 && i != 500 {
                    assert!(x as f64 <= (-120f64).exp2(), "{k} t={t}: {x}");
                }
            }
        }
    }
}

#[test]
fn parallel_matches_sequential_bit_for_bit() {
    let xs = inputs(3, 300_000, 20.0);
    let p = SoftmaxParams::new(0.5).unwrap();
    for k in KernelChoice::ALL {
        let par_exp = nonlin::exp_buffer(&xs, k);
        let seq_exp = par::sequential(|| nonlin::exp_buffer(&xs, k));
        assert!(par_exp.bit_eq(&seq_exp));
        let par_gelu = nonlin::gelu_buffer(&xs, k);
        let mut seq_gelu = vec![0.0; xs.len()];
        nonlin::gelu_slice_into(&xs, &mut seq_gelu, k);
        assert!(par_gelu.bit_eq(&seq_gelu));
        let a = nonlin::softmax_rows(&xs, 1000, &p, k).unwrap();
        let b = par::sequential(|| nonlin::softmax_rows(&xs, 1000, &p, k)).unwrap();
        assert!(a.bit_eq(&b));
    }
}
