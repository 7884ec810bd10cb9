//! Scalar abstraction for the numeric core.
//!
//! Everything that does arithmetic on weights, activations, or moments is
//! generic over [`Scalar`]; `f64` is the default everywhere and the only
//! precision the CLI uses. Randomness is always generated in `f64` and
//! converted at the boundary, so draw sequences depend only on the RNG
//! state, not on the scalar the caller picked.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the numeric core: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert a concrete `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant converts to scalar")
    }

    /// Widen to `f64` (exact for `f64`, a single rounding for `f32`).
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }

    /// Parse from the decimal form produced by `Display`.
    ///
    /// `Display` emits the shortest round-tripping representation, so
    /// `parse_str(x.to_string()) == x` bit-exactly.
    fn parse_str(s: &str) -> Option<Self>;
}

impl Scalar for f64 {
    #[inline]
    fn parse_str(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl Scalar for f32 {
    #[inline]
    fn parse_str(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}
