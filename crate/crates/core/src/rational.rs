//! Exact rational arithmetic.
//!
//! Every demand, utilization and horizon comparison goes through
//! [`Rational`]. The numerator and denominator are arbitrary precision, so
//! sums of `C/T` over many tasks with coprime periods never overflow; values
//! stay normalized (`gcd(|num|, den) = 1`, `den > 0`) after every operation.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::model::Ticks;

pub type Rational = BigRational;

/// `num / den` as a normalized rational. Panics if `den == 0`.
pub fn ratio(num: i128, den: i128) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn from_ticks(value: Ticks) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn from_u128(value: u128) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Fractional part `x - floor(x)`, always in `[0, 1)`.
pub fn fract(x: &Rational) -> Rational {
    x - x.floor()
}

/// Smallest tick count `k` with `k >= x`, clamped at zero. `None` if the
/// value does not fit in [`Ticks`].
pub fn ceil_ticks(x: &Rational) -> Option<Ticks> {
    if x.is_negative() || x.is_zero() {
        return Some(0);
    }
    x.ceil().to_integer().to_u64()
}

/// Largest tick count `k` with `k <= x`, clamped at zero.
pub fn floor_ticks(x: &Rational) -> Option<Ticks> {
    if x.is_negative() {
        return Some(0);
    }
    x.floor().to_integer().to_u64()
}

/// Round half up to the nearest integer (used only by the generator).
pub fn round_half_up(x: &Rational) -> BigInt {
    let (q, r) = x.numer().div_mod_floor(x.denom());
    if r * 2 >= *x.denom() {
        q + 1
    } else {
        q
    }
}

/// Lossy conversion for reporting only.
pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"7/12"`, `"0.95"` or `"3"` into an exact rational.
pub fn parse(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(Rational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let den = num_traits::pow(BigInt::from(10u8), frac_part.len());
    let value = Rational::new(num, den);
    Some(if negative { -value } else { value })
}
