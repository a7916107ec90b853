use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Scalar type the engine is generic over. `f32` for training and inference,
/// `f64` for gradient checks and attribution oracles.
pub trait Real:
    Float + Sum + Debug + Display + Default + Send + Sync + 'static + std::ops::AddAssign + std::ops::MulAssign
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
    /// Below this input delta a secant slope falls back to the derivative.
    fn secant_floor() -> Self;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn secant_floor() -> Self {
        1e-5
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
    #[inline]
    fn secant_floor() -> Self {
        1e-9
    }
}
