//! Scalar backends.
//!
//! Every numeric routine in the crate is generic over [`Field`]. Two
//! ordered instantiations ship with the crate: `f64` and exact
//! [`Rational`]. The fiber tracer adds a third, unordered one (rational
//! functions in one variable, see [`crate::poly::RatFun`]).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use serde_json::Value;

use crate::linalg::{self, Matrix, PivotScore};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_RTOL: f64 = 1e-10;

pub trait Field:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic is exact and `is_zero` is a decision procedure.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool;

    /// Column rank of `m`.
    fn rank(m: &Matrix<Self>) -> usize {
        linalg::rref(m).pivots.len()
    }

    /// Column rank of `m`, where `scale` is the magnitude of the data `m`
    /// was computed from. Only inexact backends use `scale`.
    fn rank_scaled(m: &Matrix<Self>, scale: f64) -> usize {
        let _ = scale;
        Self::rank(m)
    }

    /// Solves `m x = b` for a matrix of full column rank, in the
    /// least-squares sense for inexact backends. Exact backends solve on a
    /// maximal independent set of rows; callers check the residual.
    fn solve_full_column_rank(m: &Matrix<Self>, b: &[Self]) -> Vec<Self> {
        linalg::solve_on_pivot_rows(m, b)
    }

    /// A basis of the right null space of `m`.
    fn kernel(m: &Matrix<Self>) -> Vec<Vec<Self>> {
        linalg::kernel_exact(m)
    }
}

/// Ordered fields with a lossless path from and a lossy path to `f64`.
pub trait RealField: Field + PartialOrd + PivotScore {
    fn from_f64(x: f64) -> Option<Self>;
    fn to_f64(&self) -> f64;

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    /// Equality for exact backends, `rel`-relative closeness for floats.
    fn approx_eq(&self, other: &Self, rel: f64) -> bool;

    /// `x`, rounded onto this backend. Exact backends parse the shortest
    /// decimal representation of `x` so that `0.1` becomes `1/10`.
    fn from_decimal(x: f64) -> Option<Self> {
        Self::from_f64(x)
    }

    /// JSON encoding: numbers for floats, `"p/q"` strings for rationals.
    fn to_json(&self) -> Value;

    /// Accepts a JSON number or a numeric string such as `"-3/4"`.
    fn from_json(v: &Value) -> Option<Self>;
}

impl Field for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }

    fn rank(m: &Matrix<Self>) -> usize {
        linalg::svd_rank(m, RANK_RTOL)
    }

    fn rank_scaled(m: &Matrix<Self>, scale: f64) -> usize {
        linalg::svd_rank_scaled(m, RANK_RTOL, scale)
    }

    fn solve_full_column_rank(m: &Matrix<Self>, b: &[Self]) -> Vec<Self> {
        linalg::svd_least_squares(m, b)
    }

    fn kernel(m: &Matrix<Self>) -> Vec<Vec<Self>> {
        linalg::svd_kernel(m, RANK_RTOL)
    }
}

impl RealField for f64 {
    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self).map_or(Value::Null, Value::Number)
    }
    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => parse_rational(s).map(|q| RealField::to_f64(&q)),
            _ => None,
        }
    }
    fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        let scale = f64::abs(*self).max(f64::abs(*other)).max(1.0);
        (self - other).abs() <= rel * scale
    }
}

impl Field for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

impl RealField for Rational {
    fn from_f64(x: f64) -> Option<Self> {
        Rational::from_float(x)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn approx_eq(&self, other: &Self, _rel: f64) -> bool {
        self == other
    }
    fn to_json(&self) -> Value {
        Value::String(format_rational(self))
    }
    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::Number(n) => match n.as_i64() {
                Some(i) => Some(<Rational as Field>::from_i64(i)),
                None => n.as_f64().and_then(Rational::from_decimal),
            },
            Value::String(s) => parse_rational(s),
            _ => None,
        }
    }
    fn from_decimal(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        parse_rational(&format!("{x}"))
    }
}

/// Parses `"3"`, `"-7/2"` or a plain decimal such as `"0.125"` / `"1e-3"`
/// into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if Zero::is_zero(&den) {
            return None;
        }
        return Some(Rational::new(num, den));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let negative = int_part.starts_with('-');
    let int_digits = int_part.trim_start_matches(['-', '+']);
    if int_digits.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_digits.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_digits}{frac_part}").parse().ok()?;
    let shift = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if shift >= 0 {
        Rational::from_integer(digits * num_traits::pow(ten, shift as usize))
    } else {
        Rational::new(digits, num_traits::pow(ten, (-shift) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// Formats a rational as `"p/q"`, or `"p"` for integers.
pub fn format_rational(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Shorthand for `p/q` in the exact backend.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("-7/2"), Some(ratio(-7, 2)));
        assert_eq!(parse_rational("0.125"), Some(ratio(1, 8)));
        assert_eq!(parse_rational("1e-3"), Some(ratio(1, 1000)));
        assert_eq!(parse_rational("-2.5E1"), Some(ratio(-25, 1)));
        assert_eq!(parse_rational("3"), Some(ratio(3, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
    }

    #[test]
    fn decimal_conversion_uses_shortest_repr() {
        assert_eq!(Rational::from_decimal(0.1), Some(ratio(1, 10)));
        assert_eq!(Rational::from_decimal(-0.5), Some(ratio(-1, 2)));
        assert_eq!(format_rational(&ratio(6, 4)), "3/2");
        assert_eq!(format_rational(&ratio(-4, 2)), "-2");
    }
}
