//! Floating-point scalar abstraction for the numerical kernels.
//!
//! All signal-processing and physics math in this crate is generic over
//! [`Scalar`], so the same code runs in `f32` or `f64`. Experiment
//! descriptions (configs, count records) stay `f64` since they mirror the
//! on-disk formats; the crate root exposes `f64` aliases for the analysis
//! result types.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssign + rustfft::FftNum + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + NumAssign + rustfft::FftNum + Send + Sync + 'static
{
}

/// Convert an `f64` literal or parameter into the working scalar type.
#[inline]
pub fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 value representable in scalar type")
}
