//! Scalar abstraction and numerically stable log-domain reductions.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the scoring core is generic over.
///
/// Implemented for `f32` and `f64`. Wire formats always carry `f64`; values are
/// cast into the working scalar on load.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(sum(exp(xs)))`, shifted by the maximum so large magnitudes neither
/// overflow nor underflow. Empty input (or all `-inf`) gives `-inf`.
pub fn logsumexp<F: Scalar>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return F::neg_infinity();
    }
    if max == F::infinity() {
        return F::infinity();
    }
    let sum: F = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Log of the arithmetic mean of `exp(xs)`: `logsumexp(xs) - ln(n)`.
pub fn log_mean_exp<F: Scalar>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::neg_infinity();
    }
    logsumexp(xs) - F::of(xs.len() as f64).ln()
}
