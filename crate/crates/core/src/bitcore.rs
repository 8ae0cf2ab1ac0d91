//! IEEE-754 layout description and the value/bit-pattern primitives the
//! kernels are assembled from.

use crate::{Error, Result};

/// Mantissa field of a single-precision word.
pub const MANTISSA_MASK: u32 = 0x007F_FFFF;
/// Sign and exponent fields of a single-precision word.
pub const SIGN_EXPONENT_MASK: u32 = 0xFF80_0000;
/// Biased exponent equal to the bias with an empty mantissa, i.e. `1.0f32`.
pub const EXPONENT_BIAS_PATTERN: u32 = 0x3F80_0000;

/// Layout of a binary floating-point format.
///
/// Only [`FpFormat::SINGLE`] is backed by kernels. Other instances can be
/// described (and their derived constants queried) but nothing evaluates them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpFormat {
    exponent_bits: u32,
    mantissa_bits: u32,
    bias: i32,
}

impl FpFormat {
    pub const SINGLE: FpFormat = FpFormat {
        exponent_bits: 8,
        mantissa_bits: 23,
        bias: 127,
    };

    /// Standard layout with bias `2^(exponent_bits - 1) - 1`.
    pub fn new(exponent_bits: u32, mantissa_bits: u32) -> Result<Self> {
        if exponent_bits < 2 || mantissa_bits < 1 || exponent_bits + mantissa_bits > 63 {
            return Err(Error::config(format!(
                "unsupported layout: {exponent_bits} exponent bits, {mantissa_bits} mantissa bits"
            )));
        }
        Ok(FpFormat {
            exponent_bits,
            mantissa_bits,
            bias: (1i32 << (exponent_bits - 1)) - 1,
        })
    }

    pub fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn bias(&self) -> i32 {
        self.bias
    }

    /// `2^mantissa_bits`, the weight of one unit of biased exponent in the
    /// integer view of a word.
    pub fn mantissa_scale(&self) -> f64 {
        (self.mantissa_bits as f64).exp2()
    }

    /// Largest biased exponent of a finite value.
    pub fn max_biased_exponent(&self) -> i32 {
        (1i32 << self.exponent_bits) - 2
    }

    pub fn is_single(&self) -> bool {
        *self == Self::SINGLE
    }
}

impl Default for FpFormat {
    fn default() -> Self {
        Self::SINGLE
    }
}

/// A 32-bit word viewed as an unsigned integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct Word32(pub u32);

impl Word32 {
    #[inline(always)]
    pub fn bits(self) -> u32 {
        self.0
    }
}

impl From<u32> for Word32 {
    fn from(bits: u32) -> Self {
        Word32(bits)
    }
}

impl std::fmt::LowerHex for Word32 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::LowerHex::fmt(&self.0, f)
    }
}

impl std::fmt::UpperHex for Word32 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::UpperHex::fmt(&self.0, f)
    }
}

#[inline(always)]
pub fn float_bits_as_int(x: f32) -> Word32 {
    Word32(x.to_bits())
}

#[inline(always)]
pub fn int_bits_as_float(w: Word32) -> f32 {
    f32::from_bits(w.0)
}

/// Value conversion with truncation toward zero.
///
/// Callers must keep `x` inside the `i32` range; out-of-range inputs saturate
/// and NaN maps to zero, which the kernels never rely on.
#[inline(always)]
pub fn convert_to_int(x: f32) -> i32 {
    x as i32
}

/// Mantissa field of `w`. Only the single-precision layout is supported.
#[inline(always)]
pub fn extract_mantissa_field(w: Word32, fmt: FpFormat) -> Word32 {
    debug_assert!(fmt.is_single());
    Word32(w.0 & MANTISSA_MASK)
}
