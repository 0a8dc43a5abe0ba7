//! Scalar abstraction. Everything numeric in this crate is generic over
//! [`Float`] so the same code runs in `f32` or `f64`; the CLI and the type
//! aliases at the crate root fix `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the crate.
///
/// The serde bounds exist because configs, audit records and reports carry
/// scalar values; folding them in here keeps every generic struct plain.
pub trait Float:
    num_traits::Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Cast from `f64`, used for constants and RNG output.
    ///
    /// Panics on values a finite `f64` cannot represent in `Self`, which no
    /// call site produces.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to any supported scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("supported scalars convert to f64")
    }

    /// Exact cast of a small count; counts in this crate stay far below 2^52.
    fn from_count(n: u64) -> Self {
        Self::cast(n as f64)
    }
}

impl Float for f32 {}
impl Float for f64 {}
