//! Scalar abstraction shared by point clouds, neighbor search and estimators.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a point cloud: `f32` or `f64`.
///
/// All distance and estimator arithmetic is carried out in `f64`
/// regardless of the storage type; `as_f64` is the widening hook used in
/// the inner loops.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// NPY `descr` string for the little-endian encoding of this type.
    const NPY_DESCR: &'static str;

    fn as_f64(self) -> f64;
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    const NPY_DESCR: &'static str = "<f4";

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    const NPY_DESCR: &'static str = "<f8";

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
