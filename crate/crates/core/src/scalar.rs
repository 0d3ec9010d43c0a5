//! Scalar abstractions shared by every numeric module.
//!
//! [`Scalar`] is the plain floating-point base type (`f32` or `f64`).
//! [`Real`] is anything the loss functions can be evaluated on: either a
//! plain scalar, or a [`Var`](crate::autodiff::Var) recorded on a tape.
//! Writing the losses once against [`Real`] lets the same code serve both
//! inference and back-propagation.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, FromPrimitive, NumCast, One, Zero};

use crate::autodiff::DomainError;

/// Floating point base type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable logistic function.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// A value the losses can be computed on.
///
/// Binary operators with `Self::Base` on the right-hand side are part of
/// the contract so generic code can mix trainable values with constants.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<<Self as Real>::Base, Output = Self>
    + Sub<<Self as Real>::Base, Output = Self>
    + Mul<<Self as Real>::Base, Output = Self>
    + Div<<Self as Real>::Base, Output = Self>
{
    type Base: Scalar;

    /// Forward value.
    fn value(&self) -> Self::Base;

    /// A constant living in the same context as `self` (same tape).
    fn lift(&self, c: Self::Base) -> Self;

    fn exp(self) -> Self;

    /// Natural log; non-positive (or NaN) arguments are a domain error.
    fn ln(self) -> Result<Self, DomainError>;

    fn logistic(self) -> Self;

    /// Absolute value; subgradient 0 at the origin.
    fn abs(self) -> Self;

    /// `max(self, c)`; the derivative is 0 whenever the constant wins,
    /// ties included.
    fn max_const(self, c: Self::Base) -> Self;

    /// Clamps into `[lo, hi]`; derivative 1 inside (inclusive), 0 outside.
    fn clamp_const(self, lo: Self::Base, hi: Self::Base) -> Self;

    /// Sum of a non-empty slice, `None` when empty.
    fn sum(xs: &[Self]) -> Option<Self>;

    /// `Σ a_i·b_i` over two equally long, non-empty slices.
    fn dot(a: &[Self], b: &[Self]) -> Option<Self>;

    /// `Σ a_i·c_i` with constant weights `c`.
    fn dot_const(a: &[Self], c: &[Self::Base]) -> Option<Self>;

    /// Arithmetic mean of a non-empty slice.
    fn mean(xs: &[Self]) -> Option<Self> {
        let n = Self::Base::from_usize(xs.len())?;
        Self::sum(xs).map(|s| s / n)
    }

    fn tanh(self) -> Self {
        // tanh(x) = 2σ(2x) − 1
        let two = Self::Base::lit(2.0);
        (self * two).logistic() * two - Self::Base::one()
    }

    fn relu(self) -> Self {
        self.max_const(Self::Base::zero())
    }
}

impl<T: Scalar> Real for T {
    type Base = T;

    #[inline]
    fn value(&self) -> T {
        *self
    }

    #[inline]
    fn lift(&self, c: T) -> T {
        c
    }

    #[inline]
    fn exp(self) -> T {
        Float::exp(self)
    }

    #[inline]
    fn ln(self) -> Result<T, DomainError> {
        if self > T::zero() {
            Ok(Float::ln(self))
        } else {
            Err(DomainError::NonPositiveLog(self.to_f64_lossy()))
        }
    }

    #[inline]
    fn logistic(self) -> T {
        logistic(self)
    }

    #[inline]
    fn abs(self) -> T {
        Float::abs(self)
    }

    #[inline]
    fn max_const(self, c: T) -> T {
        if self > c {
            self
        } else {
            c
        }
    }

    #[inline]
    fn clamp_const(self, lo: T, hi: T) -> T {
        if self < lo {
            lo
        } else if self > hi {
            hi
        } else if self.is_nan() {
            // Follows `f64::max` semantics: a NaN never survives a clamp.
            lo
        } else {
            self
        }
    }

    fn sum(xs: &[T]) -> Option<T> {
        if xs.is_empty() {
            return None;
        }
        Some(xs.iter().fold(T::zero(), |acc, &x| acc + x))
    }

    fn dot(a: &[T], b: &[T]) -> Option<T> {
        if a.is_empty() || a.len() != b.len() {
            return None;
        }
        Some(a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y))
    }

    fn dot_const(a: &[T], c: &[T]) -> Option<T> {
        Self::dot(a, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(logistic(0.0f64), 0.5);
        assert!(logistic(-800.0f64) >= 0.0);
        assert_eq!(logistic(800.0f64), 1.0);
        assert!((logistic(2.0f32) - 0.880_797).abs() < 1e-6);
    }

    #[test]
    fn plain_ln_rejects_non_positive() {
        assert!(Real::ln(0.0f64).is_err());
        assert!(Real::ln(-1.0f64).is_err());
        assert!(Real::ln(f64::NAN).is_err());
        assert_eq!(Real::ln(1.0f64).unwrap(), 0.0);
    }

    #[test]
    fn clamp_const_swallows_nan() {
        assert_eq!(f64::NAN.clamp_const(0.1, 0.9), 0.1);
        assert_eq!(2.0f64.clamp_const(0.1, 0.9), 0.9);
        assert_eq!(0.5f64.clamp_const(0.1, 0.9), 0.5);
    }

    #[test]
    fn tanh_via_logistic_matches_std() {
        for &x in &[-3.0f64, -0.4, 0.0, 0.7, 5.0] {
            assert!((Real::tanh(x) - x.tanh()).abs() < 1e-15);
        }
    }
}
