//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::LinalgScalar;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar: `f32` or `f64`.
///
/// Optimization runs in `f64`; `f32` is supported for evaluation and export.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `ln(1 + e^x)` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::lit(30.0) {
            self
        } else {
            self.exp().ln_1p()
        }
    }

    /// Logistic sigmoid, the derivative of [`Real::softplus`].
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_closed_form() {
        assert!((0.0f64.softplus() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(100.0f64.softplus(), 100.0);
        assert!((-50.0f64).softplus() > 0.0);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-3.0f64, -0.5, 0.0, 0.7, 12.0] {
            assert!((x.sigmoid() + (-x).sigmoid() - 1.0).abs() < 1e-15);
        }
    }
}
