//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the navigation math: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    /// Lossy conversion back to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar must convert to f64")
    }

    /// Tolerance floor: `max(tol, factor * machine epsilon)`.
    ///
    /// Tolerances throughout the crate are written for `f64`; this keeps
    /// them meaningful when the crate is instantiated with `f32`.
    #[inline]
    fn tol(tol: f64, factor: f64) -> Self {
        let eps = Self::default_epsilon().as_f64();
        Self::lit(tol.max(factor * eps))
    }
}

impl Real for f32 {}
impl Real for f64 {}
