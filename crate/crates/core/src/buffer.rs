use std::ops::{Deref, DerefMut};

/// Contiguous run of `f32` values. Matrices are row-major views over it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NumericBuffer(Vec<f32>);

impl NumericBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        NumericBuffer(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    /// Row `i` of the matrix with `cols` columns.
    pub fn row(&self, i: usize, cols: usize) -> &[f32] {
        &self.0[i * cols..(i + 1) * cols]
    }

    /// Bitwise equality, treating NaN payloads and signed zeros as distinct.
    pub fn bit_eq(&self, other: &[f32]) -> bool {
        self.0.len() == other.len()
            && self.0.iter().zip(other).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl From<Vec<f32>> for NumericBuffer {
    fn from(v: Vec<f32>) -> Self {
        NumericBuffer(v)
    }
}

impl From<&[f32]> for NumericBuffer {
    fn from(v: &[f32]) -> Self {
        NumericBuffer(v.to_vec())
    }
}

impl From<NumericBuffer> for Vec<f32> {
    fn from(b: NumericBuffer) -> Self {
        b.0
    }
}

impl FromIterator<f32> for NumericBuffer {
    fn from_iter<I: IntoIterator<Item = f32>>(iter: I) -> Self {
        NumericBuffer(iter.into_iter().collect())
    }
}

impl Deref for NumericBuffer {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl DerefMut for NumericBuffer {
    fn deref_mut(&mut self) -> &mut [f32] {
        &mut self.0
    }
}

impl PartialEq<[f32]> for NumericBuffer {
    fn eq(&self, other: &[f32]) -> bool {
        self.0 == other
    }
}

impl<const N: usize> PartialEq<[f32; N]> for NumericBuffer {
    fn eq(&self, other: &[f32; N]) -> bool {
        self.0 == other
    }
}
