//! Accuracy laboratory: dense relative-error sweeps, continuity probes, the
//! quadratic-coefficient grid search and centering-bias re-optimization.
//!
//! Relative error always uses the reference value as denominator. All sweeps
//! are deterministic: sample sets are fixed grids, work is split at fixed
//! boundaries and partial sums are combined in index order.

use serde::{Deserialize, Serialize};

use crate::bitcore::FpFormat;
use crate::kernels::{AffineCoeffs, ExpKernel, QuadCoeffs, Quake, Quake2, CENTERING_BIAS};
use crate::{par, Error, Result};

/// Smallest sample count a sweep accepts.
pub const MIN_SAMPLES: u64 = 10_000;

const SWEEP_CHUNK: u64 = 1 << 16;

/// Outcome of a dense accuracy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kernel: String,
    pub lo: f64,
    pub hi: f64,
    pub samples: u64,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub argmax_input: f64,
}

/// How densely a sweep samples its range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Uniform grid density, in samples per unit of input.
    pub samples_per_unit: f64,
    /// Bit-pattern stride for the exhaustive pass over one mantissa period.
    /// `0` disables that pass.
    pub period_stride: u32,
    /// Cap on the exhaustive pass; the stride grows to respect it.
    pub max_period_samples: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            samples_per_unit: (1u64 << 20) as f64,
            period_stride: 1,
            max_period_samples: 1 << 23,
        }
    }
}

impl SweepConfig {
    /// Lighter configuration for inner loops such as bias optimization.
    pub fn coarse() -> Self {
        SweepConfig {
            samples_per_unit: 4096.0,
            period_stride: 1,
            max_period_samples: 1 << 18,
        }
    }
}

#[derive(Clone, Copy)]
struct Partial {
    max: f64,
    arg: f64,
    sum: f64,
    comp: f64,
    count: u64,
}

impl Partial {
    const EMPTY: Partial = Partial {
        max: -1.0,
        arg: f64::NAN,
        sum: 0.0,
        comp: 0.0,
        count: 0,
    };

    #[inline]
    fn push(&mut self, x: f32, err: f64) {
        if err > self.max || (err == self.max && (x as f64) < self.arg) {
            self.max = err;
            self.arg = x as f64;
        }
        // Kahan
        let y = err - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
        self.count += 1;
    }

    fn merge(mut self, other: Partial) -> Partial {
        if other.max > self.max || (other.max == self.max && other.arg < self.arg) {
            self.max = other.max;
            self.arg = other.arg;
        }
        let y = other.sum - self.comp - other.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
        self.count += other.count;
        self
    }
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::InvalidRange { lo, hi })
    }
}

/// Monotone integer key of an `f32`: adjacent floats have adjacent keys and
/// both zeros map to 0.
#[inline]
fn float_key(x: f32) -> i64 {
    let b = x.to_bits();
    if b & 0x8000_0000 != 0 {
        -((b & 0x7FFF_FFFF) as i64)
    } else {
        b as i64
    }
}

#[inline]
fn key_float(k: i64) -> f32 {
    if k < 0 {
        f32::from_bits(0x8000_0000 | (-k) as u32)
    } else {
        f32::from_bits(k as u32)
    }
}

/// Every `stride`-th representable `f32` in `[a, b)`, with the stride widened
/// so at most `cap` values are produced.
struct FloatWalk {
    start: i64,
    count: u64,
    stride: u64,
}

impl FloatWalk {
    fn new(a: f32, b: f32, stride: u64, cap: u64) -> Self {
        let span = (float_key(b) - float_key(a)).max(0) as u64;
        let stride = stride.max(span.div_ceil(cap.max(1))).max(1);
        FloatWalk {
            start: float_key(a),
            count: span.div_ceil(stride),
            stride,
        }
    }

    #[inline]
    fn get(&self, i: u64) -> f32 {
        key_float(self.start + (i * self.stride) as i64)
    }
}

fn inward_f32(lo: f64, hi: f64) -> (f32, f32) {
    let mut a = lo as f32;
    if (a as f64) < lo {
        a = a.next_up();
    }
    let mut b = hi as f32;
    if (b as f64) > hi {
        b = b.next_down();
    }
    (a, b)
}

fn sweep_partial<K, R>(kernel: &K, reference: &R, xs: impl Iterator<Item = f32>) -> Partial
where
    K: Fn(f32) -> f32,
    R: Fn(f32) -> f64,
{
    let mut p = Partial::EMPTY;
    for x in xs {
        let exact = reference(x);
        let err = ((kernel(x) as f64 - exact) / exact).abs();
        p.push(x, err);
    }
    p
}

/// Relative-error sweep of `kernel` against `reference` over `[lo, hi]`.
///
/// Samples a uniform grid at `cfg.samples_per_unit` (never fewer than
/// [`MIN_SAMPLES`] points) and, when `period` is given, additionally walks the
/// representable floats of the last full period below `hi` at
/// `cfg.period_stride`.
pub fn sweep_error<K, R>(
    label: &str,
    kernel: K,
    reference: R,
    lo: f64,
    hi: f64,
    period: Option<f64>,
    cfg: &SweepConfig,
) -> Result<ErrorReport>
where
    K: Fn(f32) -> f32 + Sync + Send,
    R: Fn(f32) -> f64 + Sync + Send,
{
    check_range(lo, hi)?;
    let (a, b) = inward_f32(lo, hi);
    if a > b {
        return Err(Error::InvalidRange { lo, hi });
    }
    if cfg.samples_per_unit.is_nan() || cfg.samples_per_unit <= 0.0 {
        return Err(Error::config("samples_per_unit must be positive"));
    }
    let n = (((hi - lo) * cfg.samples_per_unit).ceil() as u64).max(MIN_SAMPLES);
    let step = (hi - lo) / (n - 1) as f64;
    let grid = |i: u64| ((lo + step * i as f64) as f32).clamp(a, b);

    let mut partials: Vec<Partial> = par::chunked(n as usize, SWEEP_CHUNK as usize, |r| {
        sweep_partial(&kernel, &reference, (r.start as u64..r.end as u64).map(grid))
    });

    if let (Some(period), true) = (period, cfg.period_stride > 0) {
        let start = (hi - period).max(lo);
        let (pa, pb) = inward_f32(start, hi);
        let walk = FloatWalk::new(pa, pb, cfg.period_stride as u64, cfg.max_period_samples);
        partials.extend(par::chunked(walk.count as usize, SWEEP_CHUNK as usize, |r| {
            sweep_partial(&kernel, &reference, (r.start as u64..r.end as u64).map(|i| walk.get(i)))
        }));
    }

    let total = partials.into_iter().fold(Partial::EMPTY, Partial::merge);
    Ok(ErrorReport {
        kernel: label.to_string(),
        lo,
        hi,
        samples: total.count,
        max_rel_err: total.max,
        mean_rel_err: total.sum / total.count as f64,
        argmax_input: total.arg,
    })
}

/// Sweeps a configured exponential against the exact kernel with the same
/// input transform, checking the range against the kernel's clamp bounds.
pub fn sweep_kernel(kernel: &ExpKernel, lo: f64, hi: f64, cfg: &SweepConfig) -> Result<ErrorReport> {
    check_range(lo, hi)?;
    if let Some(r) = kernel.clamp() {
        if !(r.contains(lo) && r.contains(hi)) {
            return Err(Error::InvalidRange { lo, hi });
        }
    }
    let reference = kernel.reference();
    let k = *kernel;
    sweep_error(
        kernel.label(),
        move |x| k.eval(x),
        move |x| reference.eval(x) as f64,
        lo,
        hi,
        Some(kernel.period()),
        cfg,
    )
}

/// Relative error of a quadratic refinement against `2^(a_m - 1)` on
/// `a_m = 1 + i / samples`, `i < samples`. Returns `(max, argmax)`.
pub fn quad_max_rel_err(a: [f64; 3], samples: usize) -> (f64, f64) {
    let mut best = (-1.0, f64::NAN);
    for i in 0..samples {
        let m = 1.0 + i as f64 / samples as f64;
        let t = (m - 1.0).exp2();
        let e = ((a[0] * m * m + a[1] * m + a[2]) - t).abs() / t;
        if e > best.0 {
            best = (e, m);
        }
    }
    best
}

/// Exhaustive sweep of the refinement polynomial over the representable
/// floats in `[1, 2)` at the given bit stride.
pub fn mantissa_sweep(quad: &QuadCoeffs, stride: u32) -> ErrorReport {
    let a = [quad.a0 as f64, quad.a1 as f64, quad.a2 as f64];
    let stride = stride.max(1) as u64;
    let count = (1u64 << 23).div_ceil(stride);
    let partials = par::chunked(count as usize, SWEEP_CHUNK as usize, |r| {
        let mut p = Partial::EMPTY;
        for i in r {
            let m = f32::from_bits(0x3F80_0000 + (i as u64 * stride) as u32);
            let mf = m as f64;
            let t = (mf - 1.0).exp2();
            p.push(m, ((a[0] * mf * mf + a[1] * mf + a[2]) - t).abs() / t);
        }
        p
    });
    let total = partials.into_iter().fold(Partial::EMPTY, Partial::merge);
    ErrorReport {
        kernel: "mantissa".into(),
        lo: 1.0,
        hi: 2.0,
        samples: total.count,
        max_rel_err: total.max,
        mean_rel_err: total.sum / total.count as f64,
        argmax_input: total.arg,
    }
}

/// One coefficient axis of the grid: `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        GridAxis { lo, hi, step }
    }

    pub fn point(v: f64) -> Self {
        GridAxis { lo: v, hi: v, step: 1.0 }
    }

    pub fn len(&self) -> usize {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return 0;
        }
        if self.lo > self.hi || self.step <= 0.0 {
            return 0;
        }
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.lo + self.step * i as f64
    }

    /// Window of `half_width` around `center` at `step`, clipped to `self`.
    fn around(&self, center: f64, half_width: f64, step: f64) -> GridAxis {
        let lo = (center - half_width).max(self.lo);
        let hi = (center + half_width).min(self.hi);
        // snap lo onto the fine lattice through `center`
        let k = ((center - lo) / step + 1e-9).floor();
        GridAxis {
            lo: center - k * step,
            hi,
            step,
        }
    }
}

/// Second, finer pass around the coarse optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub step: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a0: GridAxis,
    pub a1: GridAxis,
    pub a2: GridAxis,
    /// Points on `[1, 2)` at which each candidate is evaluated.
    pub mantissa_samples: usize,
    pub refine: Option<Refinement>,
}

impl GridSpec {
    pub const DEFAULT_MANTISSA_SAMPLES: usize = 1024;

    pub fn new(a0: GridAxis, a1: GridAxis, a2: GridAxis) -> Self {
        GridSpec {
            a0,
            a1,
            a2,
            mantissa_samples: Self::DEFAULT_MANTISSA_SAMPLES,
            refine: None,
        }
    }

    /// Neighbourhood of the published optimum at step 0.001, followed by a
    /// 0.0001 pass over +/-0.005 around the coarse winner.
    pub fn published() -> Self {
        GridSpec {
            refine: Some(Refinement {
                step: 1e-4,
                half_width: 5e-3,
            }),
            ..Self::new(
                GridAxis::new(0.30, 0.36, 1e-3),
                GridAxis::new(-0.05, 0.02, 1e-3),
                GridAxis::new(0.64, 0.72, 1e-3),
            )
        }
    }

    /// A single candidate.
    pub fn single(a: [f64; 3]) -> Self {
        Self::new(GridAxis::point(a[0]), GridAxis::point(a[1]), GridAxis::point(a[2]))
    }

    pub fn points(&self) -> usize {
        self.a0.len() * self.a1.len() * self.a2.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: QuadCoeffs,
    /// `best` before rounding to `f32`.
    pub best_exact: [f64; 3],
    pub best_max_rel_err: f64,
    /// Final step per coefficient.
    pub grid_resolution: [f64; 3],
    pub points_evaluated: u64,
}

/// Exhaustive minimax search over one grid. Returns `(err, [a0, a1, a2])`;
/// ties go to the lowest grid index.
fn search_grid(spec: &GridSpec) -> Result<(f64, [f64; 3])> {
    let (n0, n1, n2) = (spec.a0.len(), spec.a1.len(), spec.a2.len());
    if n0 == 0 || n1 == 0 || n2 == 0 {
        return Err(Error::config("empty coefficient grid"));
    }
    let m = spec.mantissa_samples.max(2);
    let am: Vec<f64> = (0..m).map(|i| 1.0 + i as f64 / m as f64).collect();
    let target: Vec<f64> = am.iter().map(|a| (a - 1.0).exp2()).collect();
    let inv: Vec<f64> = target.iter().map(|t| 1.0 / t).collect();

    // one task per (a0, a1) pair; a2 swept inside
    let rows = par::chunked(n0 * n1, 1, |r| {
        let idx = r.start;
        let (i0, i1) = (idx / n1, idx % n1);
        let (a0, a1) = (spec.a0.value(i0), spec.a1.value(i1));
        let d: Vec<f64> = am
            .iter()
            .zip(&target)
            .map(|(&x, &t)| a0 * x * x + a1 * x - t)
            .collect();
        let mut best = (f64::INFINITY, 0usize);
        for i2 in 0..n2 {
            let a2 = spec.a2.value(i2);
            let mut e = 0.0f64;
            for (dj, wj) in d.iter().zip(&inv) {
                e = e.max((dj + a2).abs() * wj);
            }
            if e < best.0 {
                best = (e, i2);
            }
        }
        (best.0, [a0, a1, spec.a2.value(best.1)])
    });
    // rows come back in index order; strict < keeps the lowest index on ties
    let mut best = (f64::INFINITY, [0.0; 3]);
    for (e, a) in rows {
        if e < best.0 {
            best = (e, a);
        }
    }
    Ok(best)
}

/// Mantissa points for the final re-evaluation of the winner.
pub const VERIFY_SAMPLES: usize = 1 << 16;

/// Minimax grid search for the quadratic refinement of `2^(a_m - 1)` on
/// `[1, 2)`. Candidates are ranked on `mantissa_samples` points; the winner's
/// error is then re-measured on [`VERIFY_SAMPLES`] points.
pub fn grid_search_quad(spec: &GridSpec) -> Result<GridSearchResult> {
    let (err, mut best) = search_grid(spec)?;
    let mut points = spec.points() as u64;
    let mut resolution = [spec.a0.step, spec.a1.step, spec.a2.step];
    if let Some(r) = spec.refine {
        if !(r.step > 0.0 && r.half_width >= 0.0) {
            return Err(Error::config("refinement step must be positive"));
        }
        let fine = GridSpec {
            a0: spec.a0.around(best[0], r.half_width, r.step),
            a1: spec.a1.around(best[1], r.half_width, r.step),
            a2: spec.a2.around(best[2], r.half_width, r.step),
            mantissa_samples: spec.mantissa_samples,
            refine: None,
        };
        let (e, b) = search_grid(&fine)?;
        points += fine.points() as u64;
        if e < err {
            best = b;
        }
        resolution = [r.step; 3];
    }
    Ok(GridSearchResult {
        best: QuadCoeffs::new(best[0] as f32, best[1] as f32, best[2] as f32),
        best_exact: best,
        best_max_rel_err: quad_max_rel_err(best, VERIFY_SAMPLES).0,
        grid_resolution: resolution,
        points_evaluated: points,
    })
}

/// Worst relative jump across exponent boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub worst_jump: f64,
    /// Input just at or above the boundary where the worst jump occurs.
    pub at: f64,
    pub boundaries: u64,
}

/// Largest `f32` whose affine output stays below `target`, and its successor.
fn straddle(c: &AffineCoeffs, target: f64, guess: f32) -> (f32, f32) {
    let below = |x: f32| (c.apply(x) as i32 as f64) < target;
    let increasing = c.c0() > 0.0;
    // walk toward the side where the boundary is crossed
    let mut x = guess;
    type Step = fn(f32) -> f32;
    let (up, down): (Step, Step) = if increasing {
        (f32::next_up, f32::next_down)
    } else {
        (f32::next_down, f32::next_up)
    };
    while !below(x) {
        x = down(x);
    }
    while below(up(x)) {
        x = up(x);
    }
    (x, up(x))
}

/// For every biased-exponent boundary `k` in `[k_lo, k_hi]` (exponent units of
/// the output), evaluates the kernel at the last input below the boundary
/// and the first input at it and reports the largest relative jump.
pub fn continuity_probe(kernel: &ExpKernel, k_lo: i32, k_hi: i32) -> Result<ContinuityReport> {
    if k_lo > k_hi {
        return Err(Error::InvalidRange {
            lo: k_lo as f64,
            hi: k_hi as f64,
        });
    }
    let fmt = FpFormat::SINGLE;
    let c = kernel.coeffs();
    let scale = fmt.mantissa_scale();
    let mut report = ContinuityReport {
        worst_jump: 0.0,
        at: f64::NAN,
        boundaries: 0,
    };
    for k in k_lo..=k_hi {
        let target = (k as f64 + fmt.bias() as f64) * scale;
        let guess = ((target - c.c1() as f64) / c.c0() as f64) as f32;
        if let Some(r) = kernel.clamp() {
            if !(r.contains(guess as f64)) {
                return Err(Error::InvalidRange {
                    lo: k_lo as f64,
                    hi: k_hi as f64,
                });
            }
        }
        let (below, at) = straddle(&c, target, guess);
        let (yb, ya) = (kernel.eval(below) as f64, kernel.eval(at) as f64);
        // discount the step a continuous kernel takes between the two words
        let dz = (c.apply(at) as i32 as f64 - c.apply(below) as i32 as f64) / scale;
        let jump = (ya - yb * dz.exp2()).abs() / ya;
        if jump > report.worst_jump || report.at.is_nan() {
            report.worst_jump = jump;
            report.at = at as f64;
        }
        report.boundaries += 1;
    }
    Ok(report)
}

/// Which kernel family a bias search tunes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Quake,
    Quake2(QuadCoeffs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSearchConfig {
    pub family: KernelFamily,
    pub p: f64,
    pub q: f64,
    pub lo: f64,
    pub hi: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    /// Final bracket width of the golden-section search.
    pub tolerance: f64,
    pub sweep: SweepConfig,
}

impl BiasSearchConfig {
    /// Natural exponential over `[-80, 80]`, `beta` in `[0, 0.1]`.
    pub fn natural_exp(family: KernelFamily) -> Self {
        BiasSearchConfig {
            family,
            p: std::f64::consts::LOG2_E,
            q: 0.0,
            lo: -80.0,
            hi: 80.0,
            beta_lo: 0.0,
            beta_hi: 0.1,
            tolerance: 1e-5,
            sweep: SweepConfig::coarse(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSearchResult {
    pub beta: f64,
    pub max_rel_err: f64,
    /// Error with no centering bias.
    pub max_rel_err_unbiased: f64,
    /// `beta - CENTERING_BIAS`.
    pub delta_from_published: f64,
}

fn kernel_with_bias(cfg: &BiasSearchConfig, beta: f64) -> Result<ExpKernel> {
    let c = AffineCoeffs::with_bias(cfg.p, cfg.q, FpFormat::SINGLE, beta)?;
    Ok(match cfg.family {
        KernelFamily::Quake => ExpKernel::Quake(Quake::new(c)),
        KernelFamily::Quake2(quad) => ExpKernel::Quake2(Quake2::new(c, quad)),
    })
}

/// Max relative error of the configured family at centering bias `beta`.
pub fn error_at_bias(cfg: &BiasSearchConfig, beta: f64) -> Result<f64> {
    let k = kernel_with_bias(cfg, beta)?;
    Ok(sweep_kernel(&k, cfg.lo, cfg.hi, &cfg.sweep)?.max_rel_err)
}

/// Finds the centering bias minimizing the max relative error: a coarse scan
/// of the bracket followed by golden-section refinement.
pub fn bias_reoptimize(cfg: &BiasSearchConfig) -> Result<BiasSearchResult> {
    check_range(cfg.beta_lo, cfg.beta_hi)?;
    let f = |b: f64| error_at_bias(cfg, b);
    const SCAN: usize = 20;
    let h = (cfg.beta_hi - cfg.beta_lo) / SCAN as f64;
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..=SCAN {
        let e = f(cfg.beta_lo + h * i as f64)?;
        if e < best.0 {
            best = (e, i);
        }
    }
    let mut a = (cfg.beta_lo + h * best.1.saturating_sub(1) as f64).max(cfg.beta_lo);
    let mut b = (cfg.beta_lo + h * (best.1 + 1) as f64).min(cfg.beta_hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > cfg.tolerance {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    let beta = 0.5 * (a + b);
    Ok(BiasSearchResult {
        beta,
        max_rel_err: f(beta)?,
        max_rel_err_unbiased: f(0.0)?,
        delta_from_published: beta - CENTERING_BIAS,
    })
}
