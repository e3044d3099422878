//! Scalar abstractions shared by the geometric and order-statistic code.
//!
//! [`Scalar`] is the weakest bound: ordered field arithmetic plus an
//! approximate square root, which is enough for supports, diameters and the
//! threshold scans. It is implemented for `f32`, `f64` and for the exact
//! rational type [`Exact`], which the analytic support chain uses so that
//! diameter increments recover the kernel radii without rounding.
//! [`Real`] adds the `num_traits::Float` surface for code that samples or
//! evaluates transcendental functions.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Exact rational scalar.
pub type Exact = BigRational;

pub trait Scalar:
    Clone + PartialOrd + Debug + Display + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Square root of a nonnegative value. Exact types round through `f64`.
    fn root(&self) -> Self;

    /// Converts an `f64` literal. Panics on non-finite input.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(&self) -> bool {
        self.to_f64().is_some_and(f64::is_finite)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    fn root(&self) -> Self {
        self.sqrt()
    }
}

impl Scalar for f32 {
    fn root(&self) -> Self {
        self.sqrt()
    }
}

impl Scalar for BigRational {
    fn root(&self) -> Self {
        let approx = self.to_f64().unwrap_or(f64::NAN).sqrt();
        BigRational::from_f64(approx).unwrap_or_else(|| BigRational::from_integer(BigInt::from(0)))
    }

    fn is_finite_value(&self) -> bool {
        true
    }
}

/// Floating-point scalars (`f32`, `f64`).
pub trait Real: Scalar + Float + Copy {}

impl Real for f32 {}
impl Real for f64 {}

/// Lifts an `f64` into the exact rational field without rounding.
pub fn exact(x: f64) -> Exact {
    Exact::from_f64(x).expect("finite value")
}
