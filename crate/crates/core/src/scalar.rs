//! Scalar traits the numerical core is generic over.
//!
//! [`Scalar`] covers ordered fields (floats and exact rationals) and is what
//! the geometry and stack bookkeeping need. [`Real`] adds the transcendental
//! functions required by eigen-solvers and nonlinearity evaluation.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Ordered field element: `f32`, `f64` or an exact rational.
pub trait Scalar:
    Clone + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossless for dyadic inputs when the type is exact.
    fn from_f64_checked(x: f64) -> Option<Self> {
        if x.is_finite() {
            Self::from_f64(x)
        } else {
            None
        }
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        Self::min_of(Self::max_of(self, lo), hi)
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        let n = Self::from_i64(num).expect("integer conversion");
        let d = Self::from_i64(den).expect("integer conversion");
        n / d
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for BigRational {
    fn from_f64_checked(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }
}

/// Floating-point scalar with transcendental functions.
pub trait Real: Scalar + Float + Copy + Default + std::iter::Sum {
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Exact rational scalar used for interval containment checks.
pub type Exact = BigRational;

/// Exact conversion of a finite float into a rational.
pub fn exact(x: f64) -> Exact {
    BigRational::from_float(x).expect("finite value")
}

pub fn exact_int(k: i64) -> Exact {
    BigRational::from_integer(BigInt::from(k))
}
