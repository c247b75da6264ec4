//! Scalar abstractions.
//!
//! [`Scalar`] is the field-like type the closed-form parts of the crate are
//! written against: growth laws, the stability criterion, the consumption map
//! and the biodiversity estimates. It is implemented for `f32`, `f64` and
//! [`Rational64`], so boundary cases of the cut-off inequalities can be
//! evaluated exactly.
//!
//! [`Real`] adds the transcendental and finiteness operations needed by the
//! integrator and the fixed-point solver; only `f32` and `f64` provide it.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Float, Num, ToPrimitive};

/// Ordered field element usable by the closed-form computations.
pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// Converts a literal. Lossy for exact types with non-dyadic input.
    fn lit(x: f64) -> Self;
    /// Lossy conversion for reporting.
    fn as_f64(self) -> f64;
    /// Largest integer not greater than `self`.
    fn floor_val(self) -> Self;

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn abs_val(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }
}

/// Floating-point scalar for iterative and time-stepping code.
pub trait Real: Scalar + Float {}

macro_rules! impl_float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn floor_val(self) -> Self {
                <$t>::floor(self)
            }
        }
        impl Real for $t {}
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

impl Scalar for Rational64 {
    fn lit(x: f64) -> Self {
        Rational64::approximate_float(x).expect("literal not representable as Rational64")
    }
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn floor_val(self) -> Self {
        self.floor()
    }
}

/// `max(z, 0)`.
#[inline]
pub fn pos_part<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

/// Cut-off positive part: `0` if `z < delta`, `z` otherwise.
///
/// With `delta = 0` this differs from [`pos_part`] only at `z = 0`, where both
/// return zero.
#[inline]
pub fn cutoff<T: Scalar>(z: T, delta: T) -> T {
    if z < delta || z <= T::zero() {
        T::zero()
    } else {
        z
    }
}

#[inline]
pub fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

#[inline]
pub fn min_of<T: Scalar>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

/// Max-norm of the componentwise difference.
pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| max_of(acc, (x - y).abs_val()))
}

/// Max-norm.
pub fn max_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| max_of(acc, x.abs_val()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_matches_definition() {
        assert_eq!(cutoff(0.3, 0.35), 0.0);
        assert_eq!(cutoff(0.35, 0.35), 0.35);
        assert_eq!(cutoff(0.4, 0.35), 0.4);
        assert_eq!(cutoff(-0.1, 0.0), 0.0);
        assert_eq!(cutoff(0.1, 0.0), 0.1);
    }

    #[test]
    fn exact_cutoff_boundary() {
        let quarter = Rational64::new(1, 4);
        let p = Rational64::new(1, 5);
        let eps = Rational64::new(1, 20);
        // exactly on the boundary: kept
        assert_eq!(cutoff(quarter - p, eps), eps);
        // the same computation in f64 falls just below the boundary
        assert!(0.25_f64 - 0.2 < 0.05);
    }

    #[test]
    fn rational_floor() {
        assert_eq!(Rational64::new(400, 3).floor_val(), Rational64::from_integer(133));
        assert_eq!((-1.5_f64).floor_val(), -2.0);
    }
}
