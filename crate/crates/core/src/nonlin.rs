//! Softmax, GELU and logistic operators with the affine parts of each
//! operator folded into the exponential kernel's constants.
//!
//! Every operator takes a [`KernelChoice`]. `Exact` runs the platform's `f32`
//! transcendental functions through the same loops, which is the baseline the
//! benchmarks compare against. Double-precision ground truth lives in
//! [`reference`].

use std::f64::consts::LOG2_E;
use std::fmt;
use std::str::FromStr;

use crate::bitcore::FpFormat;
use crate::kernels::{
    quake2_unclamped, quake_unclamped, AffineCoeffs, ClampRange, ExpKernel, QuadCoeffs, Quake,
    Quake2,
};
use crate::{par, Error, NumericBuffer, Result};

/// Which exponential an operator is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Exact,
    Quake,
    Quake2,
}

impl KernelChoice {
    pub const ALL: [KernelChoice; 3] = [KernelChoice::Exact, KernelChoice::Quake, KernelChoice::Quake2];

    pub fn as_str(&self) -> &'static str {
        match self {
            KernelChoice::Exact => "exact",
            KernelChoice::Quake => "quake",
            KernelChoice::Quake2 => "quake2",
        }
    }

    /// Exponential kernel for `2^(p * x + q)`. The centering bias only
    /// affects the first-order kernel.
    pub fn exp_kernel(self, p: f64, q: f64, centering_bias: bool, quad: QuadCoeffs) -> Result<ExpKernel> {
        let fmt = FpFormat::SINGLE;
        Ok(match self {
            KernelChoice::Exact => {
                AffineCoeffs::new(p, q, fmt, false)?;
                ExpKernel::Exact { p, q }
            }
            KernelChoice::Quake => {
                ExpKernel::Quake(Quake::new(AffineCoeffs::new(p, q, fmt, centering_bias)?))
            }
            KernelChoice::Quake2 => ExpKernel::Quake2(Quake2::new(AffineCoeffs::new(p, q, fmt, false)?, quad)),
        })
    }

    /// `e^x` with each kernel's default configuration.
    pub fn natural_exp(self) -> ExpKernel {
        self.exp_kernel(LOG2_E, 0.0, true, QuadCoeffs::CONTINUOUS)
            .expect("valid natural-exp transform")
    }
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(KernelChoice::Exact),
            "quake" => Ok(KernelChoice::Quake),
            "quake2" => Ok(KernelChoice::Quake2),
            other => Err(Error::config(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Softmax temperature and first-order bias switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxParams {
    temperature: f32,
    /// Apply the centering bias inside `c1` for the first-order kernel. It
    /// scales every element of a row by the same factor, so normalization
    /// cancels it up to rounding.
    pub centering_bias: bool,
}

impl SoftmaxParams {
    pub fn new(temperature: f32) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(SoftmaxParams {
            temperature,
            centering_bias: true,
        })
    }

    pub fn with_centering_bias(mut self, on: bool) -> Self {
        self.centering_bias = on;
        self
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        SoftmaxParams {
            temperature: 1.0,
            centering_bias: true,
        }
    }
}

/// Constants of the tanh GELU approximation and of its logistic rewrite
/// `x * sigma(fused_scale * x * (inverse_kappa + x^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeluConstants {
    pub kappa: f64,
    pub root2_over_pi: f64,
    pub fused_scale: f64,
    pub inverse_kappa: f64,
}

impl GeluConstants {
    pub fn new() -> Self {
        let kappa = 0.044715;
        let root2_over_pi = (2.0 / std::f64::consts::PI).sqrt();
        GeluConstants {
            kappa,
            root2_over_pi,
            fused_scale: 2.0 * kappa * root2_over_pi,
            inverse_kappa: 1.0 / kappa,
        }
    }
}

impl Default for GeluConstants {
    fn default() -> Self {
        Self::new()
    }
}

const SCALE: f64 = 8_388_608.0;

fn check_row(v: &[f32]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty);
    }
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[inline]
fn row_max(v: &[f32]) -> f32 {
    v.iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Row sums are accumulated in `f64`.
#[inline]
fn normalize(out: &mut [f32], sum: f64) {
    let sum = sum as f32;
    for y in out.iter_mut() {
        *y /= sum;
    }
}

/// Products `c0 * m` beyond this are too coarse in `f32` for the fused
/// constants; such rows take the pre-scaled path.
const FUSED_LIMIT: f64 = (1u64 << 40) as f64;

/// Fused per-row constants: `c0 = 2^23 t log2(e)`, `c1 = (B - beta) 2^23 -
/// c0 m`, with the lower clamp `v_min` chosen so that `c0 v_min + c1` keeps the
/// smallest normal exponent.
fn row_coeffs(m: f32, params: &SoftmaxParams, beta: f64) -> Option<(AffineCoeffs, ClampRange)> {
    let c0 = (SCALE * params.temperature as f64 * LOG2_E) as f32;
    let shift = c0 as f64 * m as f64;
    if shift.abs() > FUSED_LIMIT {
        return None;
    }
    let c1 = ((127.0 - beta) * SCALE - shift) as f32;
    let c = AffineCoeffs::from_raw(c0, c1).ok()?;
    Some((c, ClampRange::for_coeffs(&c, FpFormat::SINGLE)))
}

/// Softmax of one row into `out`.
pub fn softmax_row_into(
    v: &[f32],
    out: &mut [f32],
    params: &SoftmaxParams,
    kernel: KernelChoice,
) -> Result<()> {
    check_row(v)?;
    assert_eq!(v.len(), out.len());
    let m = row_max(v);
    let t = params.temperature;
    let mut sum = 0.0f64;
    match kernel {
        KernelChoice::Exact => {
            for (y, &x) in out.iter_mut().zip(v) {
                *y = ((x - m) * t).exp();
                sum += *y as f64;
            }
        }
        KernelChoice::Quake | KernelChoice::Quake2 => {
            let beta = if kernel == KernelChoice::Quake && params.centering_bias {
                crate::kernels::CENTERING_BIAS
            } else {
                0.0
            };
            let Some((c, r)) = row_coeffs(m, params, beta) else {
                return softmax_row_unfused_into(v, out, params, kernel);
            };
            let v_min = r.lo();
            if kernel == KernelChoice::Quake {
                for (y, &x) in out.iter_mut().zip(v) {
                    *y = quake_unclamped(x.max(v_min), &c);
                    sum += *y as f64;
                }
            } else {
                for (y, &x) in out.iter_mut().zip(v) {
                    *y = quake2_unclamped(x.max(v_min), &c, &QuadCoeffs::CONTINUOUS);
                    sum += *y as f64;
                }
            }
        }
    }
    normalize(out, sum);
    Ok(())
}

/// Softmax without fusion: the row is explicitly shifted and scaled first,
/// then passed through the plain natural-exponential kernel.
pub fn softmax_row_unfused_into(
    v: &[f32],
    out: &mut [f32],
    params: &SoftmaxParams,
    kernel: KernelChoice,
) -> Result<()> {
    check_row(v)?;
    assert_eq!(v.len(), out.len());
    let m = row_max(v);
    let t = params.temperature;
    for (y, &x) in out.iter_mut().zip(v) {
        *y = (x - m) * t;
    }
    let mut sum = 0.0f64;
    match kernel {
        KernelChoice::Exact => {
            for y in out.iter_mut() {
                *y = y.exp();
                sum += *y as f64;
            }
        }
        KernelChoice::Quake => {
            let k = Quake::new(AffineCoeffs::natural_exp(params.centering_bias));
            for y in out.iter_mut() {
                *y = k.eval(*y);
                sum += *y as f64;
            }
        }
        KernelChoice::Quake2 => {
            let k = Quake2::natural_exp();
            for y in out.iter_mut() {
                *y = k.eval(*y);
                sum += *y as f64;
            }
        }
    }
    normalize(out, sum);
    Ok(())
}

pub fn softmax_row(v: &[f32], params: &SoftmaxParams, kernel: KernelChoice) -> Result<NumericBuffer> {
    let mut out = NumericBuffer::zeros(v.len());
    softmax_row_into(v, &mut out, params, kernel)?;
    Ok(out)
}

/// Row-wise softmax over a row-major matrix with `cols` columns.
pub fn softmax_rows(
    matrix: &[f32],
    cols: usize,
    params: &SoftmaxParams,
    kernel: KernelChoice,
) -> Result<NumericBuffer> {
    if matrix.is_empty() {
        return Err(Error::Empty);
    }
    let mut out = NumericBuffer::zeros(matrix.len());
    par::map_rows(matrix, &mut out, cols, |s, d| softmax_row_into(s, d, params, kernel))?;
    Ok(out)
}

#[inline(always)]
fn sigmoid_from_neg_exp(e: f32) -> f32 {
    1.0 / (1.0 + e)
}

/// Kernel for `e^(scale * w)` with `scale` folded into `c0`. No centering
/// bias: the kernel stays exact at 0, so `sigma(0) = 1/2` and the sigmoid
/// never crosses it.
fn scaled_exp(kernel: KernelChoice, scale: f64) -> ExpKernel {
    kernel
        .exp_kernel(scale * LOG2_E, 0.0, false, QuadCoeffs::CONTINUOUS)
        .expect("non-zero scale")
}

/// Elementwise loop specialised per kernel so the hot path has no dispatch.
macro_rules! map_with_kernel {
    ($xs:expr, $out:expr, $kernel:expr, |$x:ident, $exp:ident| $body:expr, exact: |$xe:ident| $exact:expr) => {{
        let xs: &[f32] = $xs;
        let out: &mut [f32] = $out;
        assert_eq!(xs.len(), out.len());
        match $kernel {
            ExpKernel::Exact { .. } => {
                for (o, &$xe) in out.iter_mut().zip(xs) {
                    *o = $exact;
                }
            }
            ExpKernel::Quake(k) => {
                let $exp = |w: f32| k.eval(w);
                for (o, &$x) in out.iter_mut().zip(xs) {
                    *o = $body;
                }
            }
            ExpKernel::Quake2(k) => {
                let $exp = |w: f32| k.eval(w);
                for (o, &$x) in out.iter_mut().zip(xs) {
                    *o = $body;
                }
            }
        }
    }};
}

/// Natural exponential, elementwise, sequential.
pub fn exp_slice_into(xs: &[f32], out: &mut [f32], kernel: KernelChoice) {
    let k = kernel.natural_exp();
    map_with_kernel!(xs, out, k, |x, e| e(x), exact: |x| x.exp());
}

pub fn exp(x: f32, kernel: KernelChoice) -> f32 {
    let mut out = [0.0];
    exp_slice_into(&[x], &mut out, kernel);
    out[0]
}

pub fn exp_buffer(xs: &[f32], kernel: KernelChoice) -> NumericBuffer {
    let mut out = NumericBuffer::zeros(xs.len());
    par::map_chunks(xs, &mut out, |s, d| exp_slice_into(s, d, kernel));
    out
}

/// `1 / (1 + e^-x)` with the negation folded into `c0`.
pub fn logistic_slice_into(xs: &[f32], out: &mut [f32], kernel: KernelChoice) {
    let k = scaled_exp(kernel, -1.0);
    map_with_kernel!(xs, out, k, |x, e| sigmoid_from_neg_exp(e(x)), exact: |x| sigmoid_from_neg_exp((-x).exp()));
}

pub fn logistic(x: f32, kernel: KernelChoice) -> f32 {
    let mut out = [0.0];
    logistic_slice_into(&[x], &mut out, kernel);
    out[0]
}

pub fn logistic_buffer(xs: &[f32], kernel: KernelChoice) -> NumericBuffer {
    let mut out = NumericBuffer::zeros(xs.len());
    par::map_chunks(xs, &mut out, |s, d| logistic_slice_into(s, d, kernel));
    out
}

/// `inverse_kappa + x^2`, one FMA where the target has it.
#[inline(always)]
fn gelu_inner(x: f32, inverse_kappa: f32) -> f32 {
    if cfg!(target_feature = "fma") {
        x.mul_add(x, inverse_kappa)
    } else {
        x * x + inverse_kappa
    }
}

#[inline(always)]
fn gelu_tanh_f32(x: f32, g: &GeluConstants) -> f32 {
    let (k, r) = (g.kappa as f32, g.root2_over_pi as f32);
    0.5 * x * (1.0 + (r * (x + k * x * x * x)).tanh())
}

/// GELU, elementwise, sequential. The approximate kernels evaluate
/// `x * sigma(s * x * (1/kappa + x^2))` with `-s` folded into `c0`; `Exact`
/// evaluates the tanh form.
pub fn gelu_slice_into(xs: &[f32], out: &mut [f32], kernel: KernelChoice) {
    let g = GeluConstants::new();
    let inv_k = g.inverse_kappa as f32;
    let k = scaled_exp(kernel, -g.fused_scale);
    map_with_kernel!(
        xs, out, k,
        |x, e| x * sigmoid_from_neg_exp(e(x * gelu_inner(x, inv_k))),
        exact: |x| gelu_tanh_f32(x, &g)
    );
}

/// GELU with the scale applied explicitly before a plain `e^-x` kernel.
pub fn gelu_unfused_slice_into(xs: &[f32], out: &mut [f32], kernel: KernelChoice) {
    let g = GeluConstants::new();
    let inv_k = g.inverse_kappa as f32;
    let s = g.fused_scale as f32;
    let k = scaled_exp(kernel, -1.0);
    map_with_kernel!(
        xs, out, k,
        |x, e| x * sigmoid_from_neg_exp(e(s * (x * gelu_inner(x, inv_k)))),
        exact: |x| gelu_tanh_f32(x, &g)
    );
}

pub fn gelu(x: f32, kernel: KernelChoice) -> f32 {
    let mut out = [0.0];
    gelu_slice_into(&[x], &mut out, kernel);
    out[0]
}

pub fn gelu_buffer(xs: &[f32], kernel: KernelChoice) -> NumericBuffer {
    let mut out = NumericBuffer::zeros(xs.len());
    par::map_chunks(xs, &mut out, |s, d| gelu_slice_into(s, d, kernel));
    out
}

/// Double-precision oracles, rounded to `f32` at the boundary where the
/// signature says so.
pub mod reference {
    use super::GeluConstants;

    pub fn exact_exp(x: f32) -> f32 {
        (x as f64).exp() as f32
    }

    /// Max-subtracted softmax in `f64`.
    pub fn exact_softmax_f64(v: &[f32], temperature: f32) -> Vec<f64> {
        let m = v.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let t = temperature as f64;
        let e: Vec<f64> = v.iter().map(|&x| ((x as f64 - m) * t).exp()).collect();
        let sum: f64 = e.iter().sum();
        e.into_iter().map(|y| y / sum).collect()
    }

    pub fn exact_softmax(v: &[f32], temperature: f32) -> Vec<f32> {
        exact_softmax_f64(v, temperature)
            .into_iter()
            .map(|y| y as f32)
            .collect()
    }

    pub fn logistic_f64(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + kappa x^3)))`.
    pub fn gelu_tanh_f64(x: f64) -> f64 {
        let g = GeluConstants::new();
        0.5 * x * (1.0 + (g.root2_over_pi * (x + g.kappa * x * x * x)).tanh())
    }

    /// The logistic rewrite of [`gelu_tanh_f64`].
    pub fn gelu_sigmoid_f64(x: f64) -> f64 {
        let g = GeluConstants::new();
        x * logistic_f64(g.fused_scale * x * x.mul_add(x, g.inverse_kappa))
    }

    pub fn exact_gelu_tanh(x: f32) -> f32 {
        gelu_tanh_f64(x as f64) as f32
    }
}
