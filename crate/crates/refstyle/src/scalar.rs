//! Float abstraction so every component can run in f32 or f64.
//!
//! Training uses `f32`; the verification suites re-instantiate the exact
//! same code in `f64` to compare against finite differences and closed
//! forms at tight tolerances.

use ndarray::{LinalgScalar, NdFloat, ScalarOperand};
use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_distr::num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{Debug, Display};
use std::io::{Read, Write};

/// Element type for all tensors: f32 in production, f64 for verification.
pub trait Scalar:
    NdFloat
    + LinalgScalar
    + ScalarOperand
    + Float
    + SampleUniform
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Identifies the dtype in serialized checkpoints.
    const DTYPE_TAG: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64_(self) -> f64;

    /// Draw one standard-normal sample.
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Write one value little-endian.
    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()>;
    /// Read one value little-endian.
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self>;
}

impl Scalar for f32 {
    const DTYPE_TAG: u8 = 1;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self as f64
    }
    #[inline]
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        Ok(f32::from_le_bytes(buf))
    }
}

impl Scalar for f64 {
    const DTYPE_TAG: u8 = 2;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self
    }
    #[inline]
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }
}
