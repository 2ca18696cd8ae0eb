//! Scalar trait shared by the generic geometry and cost kernels.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::Debug;

/// Floating point type usable by the generic kernels (`f32` or `f64`).
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
