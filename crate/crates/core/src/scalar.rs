//! Floating-point scalar abstraction shared by every numeric routine.
//!
//! All real-valued algorithms in this crate are generic over [`Scalar`], which
//! is implemented for `f32` and `f64`. Exact quantities (lattice-path counts,
//! the algebraic constants of the shift bounds) use big integers and
//! [`crate::surd::Surd`] instead.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Default convergence tolerance for iterative solvers at this precision.
    fn default_tol() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn default_tol() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn default_tol() -> Self {
        1e-9
    }
}

/// `log(Σ exp(v_i))` with max-shift; `-∞` for an empty or all-`-∞` input.
pub fn logsumexp<T: Scalar>(values: impl IntoIterator<Item = T> + Clone) -> T {
    let max = values
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, v| if v > m { v } else { m });
    if !max.is_finite() {
        return max;
    }
    let s: T = values.into_iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Sup-norm of the difference of two vectors, treating matching infinities as equal.
pub(crate) fn sup_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = if x == y { T::zero() } else { (x - y).abs() };
        if d > acc || d.is_nan() {
            d
        } else {
            acc
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_handles_infinities() {
        assert_eq!(logsumexp::<f64>([]), f64::NEG_INFINITY);
        assert_eq!(logsumexp([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = logsumexp([0.0f64, f64::NEG_INFINITY, 0.0]);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let big = logsumexp([1000.0f64, 1000.0]);
        assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn sup_diff_ignores_equal_infinities() {
        let a = [f64::NEG_INFINITY, 1.0];
        let b = [f64::NEG_INFINITY, 1.5];
        assert_eq!(sup_diff(&a, &b), 0.5);
    }
}
