//! Scalar abstraction: every numerical routine in this crate is generic over
//! a floating-point type implementing [`Real`] (`f32` or `f64`).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by all solvers and transforms.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn fl<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

/// Standard normal CDF via the complementary error function. The
/// transcendental kernel is evaluated in `f64`: exact for `T = f64`,
/// truncated to working precision otherwise.
#[inline]
pub fn normal_cdf<T: Real>(x: T) -> T {
    let z = x.to_f64().expect("finite scalar");
    fl(0.5 * libm::erfc(-z / std::f64::consts::SQRT_2))
}

/// Neumaier compensated summation; the result is independent of how the
/// inputs were produced (e.g. by how many worker threads) as long as the
/// slice order is fixed.
pub fn compensated_sum<T: Real>(values: &[T]) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error via compensated sums.
pub fn mean_and_se<T: Real>(values: &[T]) -> (T, T) {
    let n = values.len();
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let nf = fl::<T>(n as f64);
    let mean = compensated_sum(values) / nf;
    if n == 1 {
        return (mean, T::zero());
    }
    let sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = compensated_sum(&sq) / (nf - T::one());
    (mean, (var / nf).sqrt())
}
