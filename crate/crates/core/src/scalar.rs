//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar the whole pipeline is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + rustfft::FftNum
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + rustfft::FftNum
        + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn from_usize<T: Real>(v: usize) -> T {
    T::from_usize(v).expect("usize representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
