//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the whole crate is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Display
    + Debug
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Convert a finite `f64` constant into this scalar type.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 constant")
    }

    /// Widen to `f64` (metrics and reports are always `f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
