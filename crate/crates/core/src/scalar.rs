//! Floating-point scalar abstraction.
//!
//! Network weights and activations are stored in a generic [`Scalar`]
//! (normally `f32`, `f64` for oracle-grade tests). Reductions such as dot
//! products and norms always accumulate in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Element type of networks, datasets and operators.
pub trait Scalar:
    Float
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Lossless widening to `f64`.
    fn widen(self) -> f64;
    /// Rounding conversion from `f64`.
    fn narrow(value: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
    #[inline]
    fn narrow(value: f64) -> Self {
        value as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn narrow(value: f64) -> Self {
        value
    }
}

/// Dot product with `f64` accumulation.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.widen() * y.widen()).sum()
}

/// Squared Euclidean norm with `f64` accumulation.
#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| {
        let v = x.widen();
        v * v
    }).sum()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    norm_sq(a).sqrt()
}

/// Squared distance `‖a − b‖²`, differences taken in `f64`.
#[inline]
pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.widen() - y.widen();
            d * d
        })
        .sum()
}

/// Converts a slice between scalar types.
pub fn cast_slice<T: Scalar, U: Scalar>(values: &[T]) -> Vec<U> {
    values.iter().map(|v| U::narrow(v.widen())).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Median of a sample; averages the two middle values for even counts.
/// Returns `None` on an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}
