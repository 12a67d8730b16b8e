//! Scalar abstraction: the whole library is generic over the floating-point
//! type used for geometry and analysis.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real: Copy + FromPrimitive + FloatConst + RealField {
    /// Converts an `f64` constant, panicking if it is not representable.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// Converts a `usize` count into the scalar type.
    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
