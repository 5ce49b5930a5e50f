//! Scalar abstraction for the numeric core.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real floating-point type the numeric core is generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from an index.
    #[inline]
    fn from_usize_lossy(k: usize) -> Self {
        Self::from_usize(k).expect("index representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest tolerance that is meaningful at this precision.
    #[inline]
    fn floor_tol(requested: f64) -> Self {
        let eps = Self::epsilon() * Self::lit(64.0);
        Self::lit(requested).max(eps)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(f64::from_usize_lossy(7), 7.0);
    }

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(f64::floor_tol(1e-3), 1e-3);
        assert!(f32::floor_tol(1e-13) > 1e-6);
    }
}
