//! Numeric abstraction shared by the geometry and evaluation code.
//!
//! Everything in [`crate::geometry`] and [`crate::eval`] is written against
//! [`Scalar`], so the same matching and sweep logic runs on `f32`, `f64` or
//! exact rationals. Only `+ - * /` and ordering are required, which keeps the
//! rational instantiation exact end to end.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational used by the `Exact*` aliases at the crate root.
///
/// `i128` numerator/denominator is enough for the fixture-sized sweeps the
/// exact path is meant for; large detection sets should use `f64`.
pub type Rational = num_rational::Ratio<i128>;

/// Real-valued scalar for box coordinates, overlaps and precision/recall.
pub trait Scalar:
    Num + PartialOrd + Copy + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// `numerator / denominator` built from small integers, exact whenever
    /// the type can represent the quotient.
    fn ratio(numerator: u32, denominator: u32) -> Self {
        let n = Self::from_u32(numerator).expect("small integer representable");
        let d = Self::from_u32(denominator).expect("small integer representable");
        n / d
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Rational {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let r = Rational::ratio(55, 100);
        assert_eq!(r, Rational::new(11, 20));
        assert_eq!(f64::ratio(55, 100), 0.55);
    }

    #[test]
    fn min_max() {
        assert_eq!(3.0f64.max_of(4.0), 4.0);
        assert_eq!(3.0f32.min_of(-1.0), -1.0);
        assert_eq!(Rational::from_count(3).as_f64(), 3.0);
    }
}
