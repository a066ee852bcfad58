//! Scalar abstraction for segment scores.
//!
//! Everything that only adds, negates, scales and compares scores is generic
//! over [`Score`], so the same code runs on `f64`, `f32` and exact rationals
//! (`Ratio<i64>`), which the test suite uses to pin invariants exactly.

use std::fmt::Debug;
use std::ops::Neg;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A segment-level quality score.
pub trait Score:
    Num + Neg<Output = Self> + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync
{
}

impl<T> Score for T where
    T: Num
        + Neg<Output = T>
        + Copy
        + PartialOrd
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Send
        + Sync
{
}
