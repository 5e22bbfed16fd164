//! Scalar abstraction shared by the kinematic, dynamic and control layers.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the controller math is generic over (`f32` or `f64`).
///
/// The simulation harness (plant, benchmarks, config) is pinned to `f64`;
/// everything upstream of it only asks for this trait.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion to `f64`, used for logging and error messages.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn all_finite<'a, T: Real>(values: impl IntoIterator<Item = &'a T>) -> bool {
    values.into_iter().all(|v| v.finite())
}
