//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the engine is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Values outside the type's range saturate to infinity.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Threshold below which a Taylor series with `terms` retained terms
    /// beats direct evaluation of a removable singularity.
    fn series_cutoff(terms: i32) -> Self {
        // truncation error ~ x^(2 terms) balances cancellation error ~ eps / x^2
        Self::epsilon().powf(Self::one() / Self::lit(f64::from(2 * terms + 2)))
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}
