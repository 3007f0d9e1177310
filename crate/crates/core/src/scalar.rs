//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt;

use nalgebra as na;
use num_traits as nt;

/// Floating point type usable throughout the crate (`f32` or `f64`).
///
/// All geometric and spectral code is written against this trait; the
/// concrete aliases at the crate root fix it to `f64`.
pub trait Real:
    na::RealField
    + Copy
    + nt::FromPrimitive
    + nt::ToPrimitive
    + Default
    + Send
    + Sync
    + fmt::Display
    + fmt::LowerExp
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("representable literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).expect("finite conversion")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("representable count")
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }

    /// Machine epsilon of the concrete type.
    #[inline]
    fn machine_eps() -> Self {
        Self::default_epsilon()
    }
}

impl<T> Real for T where
    T: na::RealField
        + Copy
        + nt::FromPrimitive
        + nt::ToPrimitive
        + Default
        + Send
        + Sync
        + fmt::Display
        + fmt::LowerExp
{
}

/// Total order on reals used for sorting (NaN sorts last).
#[inline]
pub(crate) fn cmp_real<T: Real>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or_else(|| match (a.is_finite_value(), b.is_finite_value()) {
        (false, true) => std::cmp::Ordering::Greater,
        (true, false) => std::cmp::Ordering::Less,
        _ => std::cmp::Ordering::Equal,
    })
}

/// Median of a non-empty slice (average of the two middle values for even length).
pub(crate) fn median<T: Real>(values: &mut [T]) -> T {
    assert!(!values.is_empty());
    values.sort_by(|a, b| cmp_real(*a, *b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) * T::lit(0.5)
    }
}
