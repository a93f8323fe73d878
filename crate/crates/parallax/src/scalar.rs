//! Floating-point abstraction so the whole engine runs in f32 (training
//! default) or f64 (gradient-check builds).

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type of every tensor. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Width in bytes, used by the checkpoint container.
    const BYTES: usize;
    /// Dtype tag written into checkpoints (4 = f32, 8 = f64).
    const DTYPE_TAG: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const DTYPE_TAG: u8 = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const DTYPE_TAG: u8 = 8;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Shorthand for converting literals into the working float type.
#[inline]
pub fn c<F: Scalar>(v: f64) -> F {
    F::from_f64(v)
}
