//! Single-threaded op-level microbenchmarks.
//!
//! Each run fills its inputs from a seeded generator, executes the warm-up
//! iterations, then times every measured iteration with a monotonic clock.
//! Outputs are checksummed outside the timed region; every iteration must
//! reproduce the first one's checksum.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nonlin::{self, KernelChoice, SoftmaxParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    SoftmaxMatrix,
    GeluVector,
    ExpVector,
    LogisticVector,
}

impl Workload {
    pub const ALL: [Workload; 4] = [
        Workload::SoftmaxMatrix,
        Workload::GeluVector,
        Workload::ExpVector,
        Workload::LogisticVector,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Workload::SoftmaxMatrix => "softmax_matrix",
            Workload::GeluVector => "gelu_vector",
            Workload::ExpVector => "exp_vector",
            Workload::LogisticVector => "logistic_vector",
        }
    }

    /// Desk-scale shape: a 4096x4096 softmax input, 260k-element vectors.
    pub fn default_shape(&self) -> Shape {
        match self {
            Workload::SoftmaxMatrix => Shape::matrix(4096, 4096),
            _ => Shape::vector(260_000),
        }
    }

    /// The full 16384x16384 softmax input (1 GiB per buffer).
    pub fn full_shape(&self) -> Shape {
        match self {
            Workload::SoftmaxMatrix => Shape::matrix(16_384, 16_384),
            _ => Shape::vector(260_000),
        }
    }

    pub fn supports_fusion(&self) -> bool {
        matches!(self, Workload::SoftmaxMatrix | Workload::GeluVector)
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Workload::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown workload {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn vector(n: usize) -> Self {
        Shape { rows: 1, cols: n }
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub workload: Workload,
    pub shape: Shape,
    pub kernel: KernelChoice,
    pub warmup_iters: usize,
    pub measured_iters: usize,
    /// Affine transforms folded into the kernel constants.
    pub fused: bool,
    pub seed: u64,
}

impl BenchConfig {
    pub const MIN_WARMUP: usize = 2;
    pub const MIN_MEASURED: usize = 10;

    pub fn new(workload: Workload, kernel: KernelChoice) -> Self {
        BenchConfig {
            workload,
            shape: workload.default_shape(),
            kernel,
            warmup_iters: Self::MIN_WARMUP,
            measured_iters: Self::MIN_MEASURED,
            fused: true,
            seed: 0x5eed,
        }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters < Self::MIN_WARMUP {
            return Err(Error::config(format!(
                "at least {} warm-up iterations required",
                Self::MIN_WARMUP
            )));
        }
        if self.measured_iters < Self::MIN_MEASURED {
            return Err(Error::config(format!(
                "at least {} measured iterations required",
                Self::MIN_MEASURED
            )));
        }
        if self.shape.elements() == 0 {
            return Err(Error::config("empty workload shape"));
        }
        if self.workload != Workload::SoftmaxMatrix && self.shape.rows != 1 {
            return Err(Error::config(format!("{} takes a vector shape", self.workload)));
        }
        Ok(())
    }
}

/// Where and how a report was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    /// Threads used by the timed loop (always 1).
    pub threads: usize,
    pub available_threads: usize,
    pub profile: String,
    pub vectorization: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            threads: 1,
            available_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
            vectorization: if option_env!("QUAKE_NO_AUTOVEC").is_some() {
                "disabled"
            } else {
                "auto"
            }
            .into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

/// Wall-clock statistics of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub mean_secs: f64,
    pub min_secs: f64,
    pub checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub workload: Workload,
    pub kernel: KernelChoice,
    pub fused: bool,
    pub rows: usize,
    pub cols: usize,
    pub warmup_iters: usize,
    pub measured_iters: usize,
    pub mean_secs: f64,
    pub min_secs: f64,
    /// Elements per second at the mean time.
    pub throughput: f64,
    pub exact_mean_secs: f64,
    pub speedup_vs_exact: f64,
    pub checksum: u64,
    pub environment: Environment,
}

fn inputs(cfg: &BenchConfig) -> Result<Vec<f32>> {
    let n = cfg.shape.elements();
    let mut v = Vec::new();
    v.try_reserve_exact(n)
        .map_err(|_| Error::config(format!("cannot allocate {n} inputs")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = match cfg.workload {
        Workload::ExpVector => 80.0,
        _ => 10.0,
    };
    v.extend((0..n).map(|_| rng.random_range(-span..span)));
    Ok(v)
}

fn zeroed(n: usize) -> Result<Vec<f32>> {
    let mut v = Vec::new();
    v.try_reserve_exact(n)
        .map_err(|_| Error::config(format!("cannot allocate {n} outputs")))?;
    v.resize(n, 0.0);
    Ok(v)
}

fn run_once(cfg: &BenchConfig, xs: &[f32], out: &mut [f32]) -> Result<()> {
    let k = cfg.kernel;
    match cfg.workload {
        Workload::SoftmaxMatrix => {
            let p = SoftmaxParams::default();
            let cols = cfg.shape.cols;
            for (s, d) in xs.chunks(cols).zip(out.chunks_mut(cols)) {
                if cfg.fused {
                    nonlin::softmax_row_into(s, d, &p, k)?;
                } else {
                    nonlin::softmax_row_unfused_into(s, d, &p, k)?;
                }
            }
        }
        Workload::GeluVector => {
            if cfg.fused {
                nonlin::gelu_slice_into(xs, out, k)
            } else {
                nonlin::gelu_unfused_slice_into(xs, out, k)
            }
        }
        Workload::ExpVector => nonlin::exp_slice_into(xs, out, k),
        Workload::LogisticVector => nonlin::logistic_slice_into(xs, out, k),
    }
    Ok(())
}

fn checksum(out: &[f32]) -> u64 {
    out.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits() as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Times one configuration. Fails if any iteration's output differs from the
/// first.
pub fn measure(cfg: &BenchConfig) -> Result<Timing> {
    cfg.validate()?;
    let xs = inputs(cfg)?;
    let mut out = zeroed(xs.len())?;
    let mut reference = None;
    let mut verify = |out: &[f32]| -> Result<()> {
        let sum = checksum(out);
        match reference {
            None => reference = Some(sum),
            Some(r) if r != sum => {
                return Err(Error::config("kernel output changed between iterations"))
            }
            Some(_) => {}
        }
        Ok(())
    };
    for _ in 0..cfg.warmup_iters {
        run_once(cfg, black_box(&xs), &mut out)?;
        black_box(&mut out);
        verify(&out)?;
    }
    let mut total = Duration::ZERO;
    let mut min = Duration::MAX;
    for _ in 0..cfg.measured_iters {
        let start = Instant::now();
        run_once(cfg, black_box(&xs), &mut out)?;
        black_box(&mut out);
        let dt = start.elapsed().max(Duration::from_nanos(1));
        total += dt;
        min = min.min(dt);
        verify(&out)?;
    }
    Ok(Timing {
        mean_secs: total.as_secs_f64() / cfg.measured_iters as f64,
        min_secs: min.as_secs_f64(),
        checksum: reference.unwrap_or_default(),
    })
}

fn report(cfg: &BenchConfig, t: Timing, exact: Timing) -> BenchReport {
    BenchReport {
        workload: cfg.workload,
        kernel: cfg.kernel,
        fused: cfg.fused,
        rows: cfg.shape.rows,
        cols: cfg.shape.cols,
        warmup_iters: cfg.warmup_iters,
        measured_iters: cfg.measured_iters,
        mean_secs: t.mean_secs,
        min_secs: t.min_secs,
        throughput: cfg.shape.elements() as f64 / t.mean_secs,
        exact_mean_secs: exact.mean_secs,
        speedup_vs_exact: exact.mean_secs / t.mean_secs,
        checksum: t.checksum,
        environment: Environment::current(),
    }
}

/// Times `cfg` and the exact baseline on the same inputs and scaffolding.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let exact_cfg = BenchConfig {
        kernel: KernelChoice::Exact,
        ..*cfg
    };
    let exact = measure(&exact_cfg)?;
    let t = measure(cfg)?;
    Ok(report(cfg, t, exact))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub fused: BenchReport,
    pub unfused: BenchReport,
    /// Unfused mean time over fused mean time.
    pub additional_speedup: f64,
}

/// Runs the workload with and without affine fusion.
pub fn fusion_ablation(cfg: &BenchConfig) -> Result<AblationReport> {
    if !cfg.workload.supports_fusion() {
        return Err(Error::config(format!(
            "fusion ablation needs softmax_matrix or gelu_vector, got {}",
            cfg.workload
        )));
    }
    let fused_cfg = BenchConfig { fused: true, ..*cfg };
    let unfused_cfg = BenchConfig { fused: false, ..*cfg };
    let exact = measure(&BenchConfig {
        kernel: KernelChoice::Exact,
        ..fused_cfg
    })?;
    let unfused_t = measure(&unfused_cfg)?;
    let fused_t = measure(&fused_cfg)?;
    Ok(AblationReport {
        additional_speedup: unfused_t.mean_secs / fused_t.mean_secs,
        fused: report(&fused_cfg, fused_t, exact),
        unfused: report(&unfused_cfg, unfused_t, exact),
    })
}

/// Fixed-width table of reports in the given order.
pub fn format_table(reports: &[BenchReport]) -> String {
    let mut s = format!(
        "{:<16} {:<7} {:<6} {:>12} {:>14} {:>14} {:>14} {:>10}\n",
        "workload", "kernel", "fused", "shape", "mean_s", "min_s", "elems_per_s", "speedup"
    );
    for r in reports {
        s += &format!(
            "{:<16} {:<7} {:<6} {:>12} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.3}\n",
            r.workload.as_str(),
            r.kernel.as_str(),
            r.fused,
            format!("{}x{}", r.rows, r.cols),
            r.mean_secs,
            r.min_secs,
            r.throughput,
            r.speedup_vs_exact
        );
    }
    s
}
