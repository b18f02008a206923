//! Scalar abstraction shared by every codec.
//!
//! All quantizers are written against [`Scalar`] so that the same code path
//! serves `f64` (the reference precision used by the CLI and the test
//! oracles) and `f32`. Exponent arithmetic never goes through a floating
//! `log2`: [`floor_log2`] reads the binary exponent directly and [`exp2i`]
//! builds powers of two from their bit pattern.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Short dtype tag, `"f32"` or `"f64"`.
    const DTYPE: &'static str;

    /// Widening conversion; exact for both supported types.
    fn as_f64(self) -> f64;

    /// Round-to-nearest-even narrowing from `f64`.
    fn of_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
}

/// `floor(log2(x))` for finite `x > 0`, read from the binary representation.
///
/// Exact at powers of two and in the subnormal range.
#[inline]
pub fn floor_log2<T: Scalar>(x: T) -> i32 {
    debug_assert!(x > T::zero() && x.is_finite(), "floor_log2 of {x}");
    let (mantissa, exponent, _) = x.integer_decode();
    exponent as i32 + (63 - mantissa.leading_zeros() as i32)
}

/// Smallest integer `e` with `x <= 2^e`, for finite `x > 0`.
#[inline]
pub fn ceil_log2<T: Scalar>(x: T) -> i32 {
    let e = floor_log2(x);
    if x == exp2i::<T>(e) {
        e
    } else {
        e + 1
    }
}

/// `2^e` as an `f64`, built from its bit pattern in the normal range.
#[inline]
pub fn exp2i_f64(e: i32) -> f64 {
    if (-1022..=1023).contains(&e) {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        2f64.powi(e)
    }
}

/// `2^e` in `T`; exact whenever `2^e` is representable in `T`.
#[inline]
pub fn exp2i<T: Scalar>(e: i32) -> T {
    T::of_f64(exp2i_f64(e))
}

/// Round half away from zero on a non-negative argument: `floor(x + 0.5)`.
#[inline]
pub fn round_half_up<T: Scalar>(x: T) -> T {
    (x + T::of_f64(0.5)).floor()
}
