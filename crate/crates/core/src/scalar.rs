//! Floating-point scalar abstraction for the model and feature math.

use std::fmt::{Debug, Display};
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the learned components are generic over. Implemented for
/// `f32` and `f64`; the crate-root aliases pin `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + Debug
    + Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(|| Self::from_f64(v as f64).unwrap())
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
