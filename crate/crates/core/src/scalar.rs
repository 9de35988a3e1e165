//! Scalar abstraction: every numeric kernel in this crate is generic over a
//! floating-point type implementing [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type of tensors: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lower clamp applied to log/div inputs so training stays NaN-free.
    fn log_eps() -> Self {
        Self::from_f64(1e-12).unwrap()
    }

    /// Probabilities in losses are clamped to `[prob_eps, 1 - prob_eps]`.
    fn prob_eps() -> Self {
        Self::from_f64(1e-7).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lifting an f64 constant into the working scalar type.
#[inline]
pub fn c<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("constant not representable")
}
