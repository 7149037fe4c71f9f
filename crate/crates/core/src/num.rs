//! Scalar abstraction: the signal-processing core is generic over [`Real`],
//! instantiated at `f32` or `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar type the crate is generic over.
///
/// Implemented for `f32` and `f64`; everything downstream (spectrograms,
/// prediction, training, metrics) picks precision through this bound.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Casts an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn rl<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 constant")
}
