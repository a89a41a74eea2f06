use std::borrow::Cow;
use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Scalar type a network can be stored in. Models train in `f32`; the
/// matrix-space code and gradient checks run in `f64`.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn matrix_f64(m: &Array2<Self>) -> Cow<'_, Array2<f64>>;
    fn vector_f64(v: &Array1<Self>) -> Cow<'_, Array1<f64>>;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn matrix_f64(m: &Array2<Self>) -> Cow<'_, Array2<f64>> {
        Cow::Owned(m.mapv(f64::from))
    }
    fn vector_f64(v: &Array1<Self>) -> Cow<'_, Array1<f64>> {
        Cow::Owned(v.mapv(f64::from))
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn matrix_f64(m: &Array2<Self>) -> Cow<'_, Array2<f64>> {
        Cow::Borrowed(m)
    }
    fn vector_f64(v: &Array1<Self>) -> Cow<'_, Array1<f64>> {
        Cow::Borrowed(v)
    }
}
