//! Scalar abstraction shared by the closed-form and estimation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used for kernel values, probabilities and estimates.
///
/// Implemented for `f32` and `f64`. Random sampling always draws in `f64`;
/// the scalar type governs the closed forms, the exact enumeration and the
/// accumulated statistics.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, which always succeeds for the supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// `(1 - e^{-x}) / x`, continuous at zero.
pub fn one_minus_exp_ratio<R: Real>(x: R) -> R {
    if x == R::zero() {
        R::one()
    } else {
        -(-x).exp_m1() / x
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum<R> {
    sum: R,
    compensation: R,
}

impl<R: Real> CompensatedSum<R> {
    pub fn new() -> Self {
        Self {
            sum: R::zero(),
            compensation: R::zero(),
        }
    }

    pub fn add(&mut self, x: R) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> R {
        self.sum + self.compensation
    }
}
