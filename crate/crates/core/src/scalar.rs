//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All linear algebra goes through nalgebra, so the bound is `RealField`;
//! conversions to and from `f64` literals go through num-traits.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the network, certification and solver code.
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon of the underlying format.
    fn machine_eps() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal fits the scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize fits the scalar type")
    }
}

impl Scalar for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

/// Shorthand for [`Scalar::lit`].
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::lit(x)
}
