//! Exact rational helpers shared by the morphism machinery and the wire formats.
//!
//! Stochastic matrices in this crate keep their entries as `BigRational` so that
//! row-sum and constant-matrix identities can be asserted bit-exactly instead of
//! within a float tolerance. Wire formats carry entries as strings; this module
//! owns the string grammar: `p/q`, plain integers, and finite decimals.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{Pow, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RationalParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal `{0}`")]
    Invalid(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

/// Shorthand for small exact ratios, mostly used by fixtures and tests.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact conversion of a non-negative integer.
pub fn from_u64(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Lossy conversion for the float-arithmetic paths.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Canonical string form: `p/q` in lowest terms, or `p` when the denominator is 1.
pub fn format_rational(r: &BigRational) -> String {
    r.to_string()
}

/// Parses `p/q`, integer, or finite-decimal literals (e.g. `0.25`) exactly.
///
/// Exponent notation is rejected: a decimal that cannot be written out in full
/// has no business in an exact wire format.
pub fn parse_rational(s: &str) -> Result<BigRational, RationalParseError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(RationalParseError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num
            .trim()
            .parse()
            .map_err(|_| RationalParseError::Invalid(s.to_string()))?;
        let den: BigInt = den
            .trim()
            .parse()
            .map_err(|_| RationalParseError::Invalid(s.to_string()))?;
        if den.is_zero() {
            return Err(RationalParseError::ZeroDenominator(s.to_string()));
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let sign = if int_part.trim_start().starts_with('-') { -1 } else { 1 };
        let int_digits = int_part.trim_start_matches(['+', '-']);
        if !int_digits.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.is_empty()
        {
            return Err(RationalParseError::Invalid(s.to_string()));
        }
        let int_val: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits
                .parse()
                .map_err(|_| RationalParseError::Invalid(s.to_string()))?
        };
        let frac_val: BigInt = frac_part
            .parse()
            .map_err(|_| RationalParseError::Invalid(s.to_string()))?;
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let magnitude = int_val * &scale + frac_val;
        return Ok(BigRational::new(BigInt::from(sign) * magnitude, scale));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| RationalParseError::Invalid(s.to_string()))?;
    Ok(BigRational::from_integer(n))
}

/// Compensated (Kahan–Babuška–Neumaier) summation; keeps the norm-preservation
/// identities well under the 1e-12 absolute tolerances they are tested at.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}
