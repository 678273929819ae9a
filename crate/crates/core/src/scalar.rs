//! Scalar abstraction shared by the kernel and estimator layers.
//!
//! Everything that touches a Gram matrix is written against [`Scalar`], so the
//! same code runs in `f64` (the default everywhere else in the crate) and in
//! `f32` when memory matters more than the last few digits.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable in dense kernel computations.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn c(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("finite f64 literal")
    }

    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(value: usize) -> Self {
        <Self as FromPrimitive>::from_usize(value).expect("usize fits in a float")
    }

    fn is_finite_value(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
