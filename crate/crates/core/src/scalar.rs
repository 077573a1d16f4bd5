//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real scalar the formation stack is generic over (`f32`, `f64`).
///
/// Everything the algorithms need comes from nalgebra's [`RealField`]; the
/// extra bounds let results be logged, serialized and converted back to `f64`
/// for reporting.
pub trait Real:
    RealField + Copy + ToPrimitive + Debug + Display + serde::Serialize + Send + Sync + 'static
{
    /// Converts an `f64` literal or tolerance into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
