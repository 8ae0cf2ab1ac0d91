//! First- and second-order bit-trick exponentials with fused affine inputs.
//!
//! Writing `x = floor(x) + frac(x)`, the word whose biased exponent is
//! `floor(x) + B` and whose mantissa holds `frac(x)` has the value
//! `2^floor(x) * (1 + frac(x))`, the secant approximation of `2^x`. Viewed as
//! an integer that word is `(x + B) * 2^23`, an affine function of `x`, so
//! the whole kernel is one multiply-add, one float-to-int conversion and one
//! reinterpretation. An input transform `p * x + q` only changes the two
//! constants.
//!
//! The second-order kernel keeps the exponent field of that word, rebuilds
//! `a_m = 1 + frac(x)` by forcing the exponent to the bias, evaluates a
//! quadratic in `a_m`, and splices the result back under the original
//! exponent with integer arithmetic.

use crate::bitcore::{
    convert_to_int, float_bits_as_int, int_bits_as_float, FpFormat, Word32, EXPONENT_BIAS_PATTERN,
    MANTISSA_MASK, SIGN_EXPONENT_MASK,
};
use crate::{par, Error, NumericBuffer, Result};

/// Offset subtracted from the exponent bias of the first-order kernel so its
/// relative error band is centred on zero.
pub const CENTERING_BIAS: f64 = 0.0436;

/// Slack, in units of biased exponent, kept between the clamped affine output
/// and the edges of the normal range. Covers `f32` rounding of `c0 * x + c1`.
const CLAMP_MARGIN: f64 = 1.0 / 1024.0;

/// `z = c0 * x + c1`, the integer view of the result word as a function of the
/// kernel input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoeffs {
    c0: f32,
    c1: f32,
    p: f64,
    q: f64,
    beta: f64,
}

impl AffineCoeffs {
    /// Coefficients approximating `2^(p * x + q)`, optionally shifted by
    /// [`CENTERING_BIAS`].
    pub fn new(p: f64, q: f64, fmt: FpFormat, centering_bias: bool) -> Result<Self> {
        let beta = if centering_bias { CENTERING_BIAS } else { 0.0 };
        Self::with_bias(p, q, fmt, beta)
    }

    /// Same as [`AffineCoeffs::new`] with an arbitrary centering offset `beta`.
    pub fn with_bias(p: f64, q: f64, fmt: FpFormat, beta: f64) -> Result<Self> {
        if p == 0.0 || !p.is_finite() {
            return Err(Error::DegenerateScale);
        }
        if !q.is_finite() || !beta.is_finite() {
            return Err(Error::config("shift and bias must be finite"));
        }
        let scale = fmt.mantissa_scale();
        Ok(AffineCoeffs {
            c0: (scale * p) as f32,
            c1: (scale * (fmt.bias() as f64 + q - beta)) as f32,
            p,
            q,
            beta,
        })
    }

    /// `e^x`.
    pub fn natural_exp(centering_bias: bool) -> Self {
        Self::new(std::f64::consts::LOG2_E, 0.0, FpFormat::SINGLE, centering_bias)
            .expect("non-zero scale")
    }

    /// `e^-x`, the logistic path.
    pub fn natural_exp_neg(centering_bias: bool) -> Self {
        Self::new(-std::f64::consts::LOG2_E, 0.0, FpFormat::SINGLE, centering_bias)
            .expect("non-zero scale")
    }

    /// `2^x`.
    pub fn pow2(centering_bias: bool) -> Self {
        Self::new(1.0, 0.0, FpFormat::SINGLE, centering_bias).expect("non-zero scale")
    }

    /// Wraps constants computed elsewhere, e.g. per softmax row. The recorded
    /// derivation is recovered from the constants themselves.
    pub fn from_raw(c0: f32, c1: f32) -> Result<Self> {
        if c0 == 0.0 || !c0.is_finite() {
            return Err(Error::DegenerateScale);
        }
        if !c1.is_finite() {
            return Err(Error::config("c1 must be finite"));
        }
        let fmt = FpFormat::SINGLE;
        let scale = fmt.mantissa_scale();
        Ok(AffineCoeffs {
            c0,
            c1,
            p: c0 as f64 / scale,
            q: c1 as f64 / scale - fmt.bias() as f64,
            beta: 0.0,
        })
    }

    #[inline(always)]
    pub fn c0(&self) -> f32 {
        self.c0
    }

    #[inline(always)]
    pub fn c1(&self) -> f32 {
        self.c1
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn bias_applied(&self) -> bool {
        self.beta != 0.0
    }

    /// Affine output `c0 * x + c1` as the kernels compute it.
    #[inline(always)]
    pub fn apply(&self, x: f32) -> f32 {
        x * self.c0 + self.c1
    }
}

/// `coeffs_for(p, q, fmt, centering_bias)`.
pub fn coeffs_for(p: f64, q: f64, fmt: FpFormat, centering_bias: bool) -> Result<AffineCoeffs> {
    AffineCoeffs::new(p, q, fmt, centering_bias)
}

/// Quadratic mantissa refinement `y_m = a0 * a_m^2 + a1 * a_m + a2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadCoeffs {
    pub a0: f32,
    pub a1: f32,
    pub a2: f32,
}

impl QuadCoeffs {
    /// Exact at `a_m = 1` and `a_m = 2` with `a1 = 0`, so the refined kernel
    /// stays continuous across exponent boundaries.
    pub const CONTINUOUS: QuadCoeffs = QuadCoeffs {
        a0: 1.0 / 3.0,
        a1: 0.0,
        a2: 2.0 / 3.0,
    };

    /// Published minimax grid-search optimum. Not endpoint-exact.
    pub const GRID_OPTIMUM: QuadCoeffs = QuadCoeffs {
        a0: 0.33,
        a1: -0.017,
        a2: 0.68,
    };

    pub fn new(a0: f32, a1: f32, a2: f32) -> Self {
        QuadCoeffs { a0, a1, a2 }
    }

    /// Whether these are the continuous coefficients, evaluated through the
    /// dedicated `(a_m^2 + 2) / 3` path.
    pub fn is_continuous(&self) -> bool {
        *self == Self::CONTINUOUS
    }

    /// `(a0 + a1 + a2, 4 a0 + 2 a1 + a2)`: the refinement at `a_m = 1` and `2`.
    pub fn endpoints(&self) -> (f64, f64) {
        let (a0, a1, a2) = (self.a0 as f64, self.a1 as f64, self.a2 as f64);
        (a0 + a1 + a2, 4.0 * a0 + 2.0 * a1 + a2)
    }

    /// General three-coefficient evaluation in Horner form, fused where the
    /// target has FMA.
    #[inline(always)]
    pub fn eval(&self, a_m: f32) -> f32 {
        if cfg!(target_feature = "fma") {
            self.a0.mul_add(a_m, self.a1).mul_add(a_m, self.a2)
        } else {
            (self.a0 * a_m + self.a1) * a_m + self.a2
        }
    }
}

impl Default for QuadCoeffs {
    fn default() -> Self {
        Self::CONTINUOUS
    }
}

#[inline(always)]
fn refine_continuous(a_m: f32) -> f32 {
    (a_m * a_m + 2.0) / 3.0
}

/// Saturation bounds on the kernel input, in pre-transform units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampRange {
    lo: f32,
    hi: f32,
}

impl ClampRange {
    pub fn new(lo: f32, hi: f32) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidRange {
                lo: lo as f64,
                hi: hi as f64,
            });
        }
        Ok(ClampRange { lo, hi })
    }

    /// Widest input range for which `c0 * x + c1` lands inside the normal,
    /// finite exponent range with a small safety margin.
    pub fn for_coeffs(c: &AffineCoeffs, fmt: FpFormat) -> Self {
        let scale = fmt.mantissa_scale();
        let z_lo = (1.0 + CLAMP_MARGIN) * scale;
        let z_hi = (fmt.max_biased_exponent() as f64 + 1.0 - CLAMP_MARGIN) * scale;
        let (c0, c1) = (c.c0 as f64, c.c1 as f64);
        let a = (z_lo - c1) / c0;
        let b = (z_hi - c1) / c0;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (mut lo, mut hi) = (round_up_f32(lo), round_down_f32(hi));
        // The affine output is evaluated in f32; when |c0 * x| dwarfs the
        // result its rounding can exceed the margin, so walk inward until the
        // computed edges are safe.
        let safe = |x: f32| {
            let z = c.apply(x) as f64;
            z >= scale && z < (fmt.max_biased_exponent() as f64 + 1.0) * scale
        };
        while !safe(lo) && lo < hi {
            lo = lo.next_up();
        }
        while !safe(hi) && hi > lo {
            hi = hi.next_down();
        }
        ClampRange { lo, hi }
    }

    #[inline(always)]
    pub fn lo(&self) -> f32 {
        self.lo
    }

    #[inline(always)]
    pub fn hi(&self) -> f32 {
        self.hi
    }

    /// Branch-free saturation; NaN maps to `hi`.
    #[inline(always)]
    pub fn clamp(&self, x: f32) -> f32 {
        x.min(self.hi).max(self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo as f64 && x <= self.hi as f64
    }
}

fn round_up_f32(v: f64) -> f32 {
    let r = v as f32;
    if (r as f64) < v {
        r.next_up()
    } else {
        r
    }
}

fn round_down_f32(v: f64) -> f32 {
    let r = v as f32;
    if (r as f64) > v {
        r.next_down()
    } else {
        r
    }
}

/// Clamp range for the unbiased coefficients of `2^(p * x + q)`.
pub fn default_clamp(p: f64, q: f64, fmt: FpFormat) -> Result<ClampRange> {
    let c = AffineCoeffs::new(p, q, fmt, false)?;
    Ok(ClampRange::for_coeffs(&c, fmt))
}

/// First-order kernel on an already clamped input.
#[inline(always)]
pub fn quake_unclamped(x: f32, c: &AffineCoeffs) -> f32 {
    int_bits_as_float(Word32(convert_to_int(c.apply(x)) as u32))
}

#[inline(always)]
pub fn quake(x: f32, c: &AffineCoeffs, r: &ClampRange) -> f32 {
    quake_unclamped(r.clamp(x), c)
}

#[inline(always)]
fn quake2_with<F: Fn(f32) -> f32>(x: f32, c: &AffineCoeffs, refine: F) -> f32 {
    let z = convert_to_int(c.apply(x)) as u32;
    let a_m = int_bits_as_float(Word32((z & MANTISSA_MASK) | EXPONENT_BIAS_PATTERN));
    let y_m = float_bits_as_int(refine(a_m)).bits();
    int_bits_as_float(Word32(
        (z & SIGN_EXPONENT_MASK)
            .wrapping_add(y_m)
            .wrapping_sub(EXPONENT_BIAS_PATTERN),
    ))
}

/// Second-order kernel on an already clamped input.
#[inline(always)]
pub fn quake2_unclamped(x: f32, c: &AffineCoeffs, a: &QuadCoeffs) -> f32 {
    if a.is_continuous() {
        quake2_with(x, c, refine_continuous)
    } else {
        quake2_with(x, c, |m| a.eval(m))
    }
}

#[inline(always)]
pub fn quake2(x: f32, c: &AffineCoeffs, a: &QuadCoeffs, r: &ClampRange) -> f32 {
    quake2_unclamped(r.clamp(x), c, a)
}

/// Sequential elementwise first-order kernel.
pub fn quake_slice_into(xs: &[f32], out: &mut [f32], c: &AffineCoeffs, r: &ClampRange) {
    assert_eq!(xs.len(), out.len());
    let (c, r) = (*c, *r);
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = quake(x, &c, &r);
    }
}

/// Sequential elementwise second-order kernel.
pub fn quake2_slice_into(
    xs: &[f32],
    out: &mut [f32],
    c: &AffineCoeffs,
    a: &QuadCoeffs,
    r: &ClampRange,
) {
    assert_eq!(xs.len(), out.len());
    let (c, a, r) = (*c, *a, *r);
    if a.is_continuous() {
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = quake2_with(r.clamp(x), &c, refine_continuous);
        }
    } else {
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = quake2_with(r.clamp(x), &c, |m| a.eval(m));
        }
    }
}

pub fn quake_buffer(xs: &[f32], c: &AffineCoeffs, r: &ClampRange) -> NumericBuffer {
    let mut out = NumericBuffer::zeros(xs.len());
    par::map_chunks(xs, &mut out, |s, d| quake_slice_into(s, d, c, r));
    out
}

pub fn quake2_buffer(
    xs: &[f32],
    c: &AffineCoeffs,
    a: &QuadCoeffs,
    r: &ClampRange,
) -> NumericBuffer {
    let mut out = NumericBuffer::zeros(xs.len());
    par::map_chunks(xs, &mut out, |s, d| quake2_slice_into(s, d, c, a, r));
    out
}

/// First-order kernel bundled with its saturation bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quake {
    pub coeffs: AffineCoeffs,
    pub clamp: ClampRange,
}

impl Quake {
    pub fn new(coeffs: AffineCoeffs) -> Self {
        Quake {
            clamp: ClampRange::for_coeffs(&coeffs, FpFormat::SINGLE),
            coeffs,
        }
    }

    /// `e^x` with the centering bias applied.
    pub fn natural_exp() -> Self {
        Self::new(AffineCoeffs::natural_exp(true))
    }

    /// `2^x`, unbiased.
    pub fn pow2() -> Self {
        Self::new(AffineCoeffs::pow2(false))
    }

    #[inline(always)]
    pub fn eval(&self, x: f32) -> f32 {
        quake(x, &self.coeffs, &self.clamp)
    }

    pub fn apply(&self, xs: &[f32]) -> NumericBuffer {
        quake_buffer(xs, &self.coeffs, &self.clamp)
    }

    pub fn apply_into(&self, xs: &[f32], out: &mut [f32]) {
        quake_slice_into(xs, out, &self.coeffs, &self.clamp)
    }
}

/// Second-order kernel bundled with its refinement and saturation bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quake2 {
    pub coeffs: AffineCoeffs,
    pub quad: QuadCoeffs,
    pub clamp: ClampRange,
}

impl Quake2 {
    pub fn new(coeffs: AffineCoeffs, quad: QuadCoeffs) -> Self {
        Quake2 {
            clamp: ClampRange::for_coeffs(&coeffs, FpFormat::SINGLE),
            coeffs,
            quad,
        }
    }

    /// `e^x`, unbiased, continuous refinement.
    pub fn natural_exp() -> Self {
        Self::new(AffineCoeffs::natural_exp(false), QuadCoeffs::CONTINUOUS)
    }

    /// `2^x`, unbiased, continuous refinement.
    pub fn pow2() -> Self {
        Self::new(AffineCoeffs::pow2(false), QuadCoeffs::CONTINUOUS)
    }

    #[inline(always)]
    pub fn eval(&self, x: f32) -> f32 {
        quake2(x, &self.coeffs, &self.quad, &self.clamp)
    }

    pub fn apply(&self, xs: &[f32]) -> NumericBuffer {
        quake2_buffer(xs, &self.coeffs, &self.quad, &self.clamp)
    }

    pub fn apply_into(&self, xs: &[f32], out: &mut [f32]) {
        quake2_slice_into(xs, out, &self.coeffs, &self.quad, &self.clamp)
    }
}

/// A configured exponential `2^(p * x + q)`, exact or approximate. This is
/// the unit the accuracy lab sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpKernel {
    /// Double-precision evaluation rounded to `f32`.
    Exact { p: f64, q: f64 },
    Quake(Quake),
    Quake2(Quake2),
}

impl ExpKernel {
    #[inline]
    pub fn eval(&self, x: f32) -> f32 {
        match self {
            ExpKernel::Exact { p, q } => exact_affine_exp(*p, *q, x),
            ExpKernel::Quake(k) => k.eval(x),
            ExpKernel::Quake2(k) => k.eval(x),
        }
    }

    /// Input transform `(p, q)`.
    pub fn transform(&self) -> (f64, f64) {
        match self {
            ExpKernel::Exact { p, q } => (*p, *q),
            ExpKernel::Quake(k) => (k.coeffs.p, k.coeffs.q),
            ExpKernel::Quake2(k) => (k.coeffs.p, k.coeffs.q),
        }
    }

    pub fn clamp(&self) -> Option<ClampRange> {
        match self {
            ExpKernel::Exact { .. } => None,
            ExpKernel::Quake(k) => Some(k.clamp),
            ExpKernel::Quake2(k) => Some(k.clamp),
        }
    }

    /// Affine coefficients whose integer lattice defines the kernel's exponent
    /// boundaries. The exact kernel reports its unbiased equivalent.
    pub fn coeffs(&self) -> AffineCoeffs {
        match self {
            ExpKernel::Exact { p, q } => {
                AffineCoeffs::new(*p, *q, FpFormat::SINGLE, false).expect("validated scale")
            }
            ExpKernel::Quake(k) => k.coeffs,
            ExpKernel::Quake2(k) => k.coeffs,
        }
    }

    /// The exact kernel with the same input transform.
    pub fn reference(&self) -> ExpKernel {
        let (p, q) = self.transform();
        ExpKernel::Exact { p, q }
    }

    /// Input span of one mantissa period (one binade of output).
    pub fn period(&self) -> f64 {
        1.0 / self.transform().0.abs()
    }

    pub fn label(&self) -> &'static str {
        match self {
            ExpKernel::Exact { .. } => "exact",
            ExpKernel::Quake(_) => "quake",
            ExpKernel::Quake2(_) => "quake2",
        }
    }
}

/// `2^(p * x + q)` in double precision, rounded to `f32`.
#[inline]
pub fn exact_affine_exp(p: f64, q: f64, x: f32) -> f32 {
    (p * x as f64 + q).exp2() as f32
}
