//! Approximate exponential kernels built from IEEE-754 bit manipulation.
//!
//! The first-order kernel (`quake`) computes `z = c0 * x + c1` in floating
//! point, value-converts `z` to an integer and reinterprets the integer as a
//! float. Any affine input transform `p * x + q` is folded into `c0`/`c1` for
//! free. The second-order kernel (`quake2`) additionally replaces the linear
//! mantissa with a quadratic refinement, bringing the worst-case relative
//! error from a few percent down to about a third of a percent.
//!
//! On top of the scalar kernels sit fused softmax, GELU and logistic
//! operators ([`nonlin`]), an accuracy laboratory ([`lab`]) and a
//! single-threaded microbenchmark harness ([`bench`]).
//!
//! Buffer-wide operations are data parallel when the `parallel` feature is
//! enabled (the default) and fall back to plain loops otherwise. Results never
//! depend on the number of worker threads.

pub mod bench;
pub mod bitcore;
pub mod buffer;
mod error;
pub mod io;
pub mod kernels;
pub mod lab;
pub mod nonlin;
pub mod par;

pub use buffer::NumericBuffer;
pub use error::{Error, Result};
pub use kernels::{AffineCoeffs, ClampRange, QuadCoeffs, Quake, Quake2};
pub use nonlin::{KernelChoice, SoftmaxParams};
