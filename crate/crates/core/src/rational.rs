//! Exact rational helpers shared by every module.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Rational {
    Rational::new(num.into(), den.into())
}

pub fn int(v: impl Into<BigInt>) -> Rational {
    Rational::from_integer(v.into())
}

/// Parses `"a/b"`, an integer, or a plain decimal such as `"0.25"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let err = || Error::ParseRational(s.to_string());
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let negative = whole.starts_with('-');
        let whole: BigInt = if whole.is_empty() || whole == "-" {
            BigInt::zero()
        } else {
            whole.parse().map_err(|_| err())?
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac: BigInt = frac.parse().map_err(|_| err())?;
        let magnitude = whole.abs() * &scale + frac;
        let num = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(num, scale));
    }
    let n: BigInt = s.parse().map_err(|_| err())?;
    Ok(Rational::from_integer(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `⌈r⌉` for a non-negative rational, as `u64` (saturating).
pub fn ceil_u64(r: &Rational) -> u64 {
    r.ceil().to_integer().to_u64().unwrap_or(u64::MAX)
}

/// `⌊r⌋` for a non-negative rational, as `u64` (saturating).
pub fn floor_u64(r: &Rational) -> u64 {
    r.floor().to_integer().to_u64().unwrap_or(u64::MAX)
}

pub fn display(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `⌊log2(num/den)⌋` for positive integers.
pub fn floor_log2(num: &BigUint, den: &BigUint) -> i64 {
    debug_assert!(!num.is_zero() && !den.is_zero());
    let k = num.bits() as i64 - den.bits() as i64;
    let ge = if k >= 0 {
        *num >= den << (k as u64)
    } else {
        (num << ((-k) as u64)) >= *den
    };
    if ge {
        k
    } else {
        k - 1
    }
}

/// Compares `Π lhs` with `Π rhs` exactly, using `u128` when the products fit.
pub fn cmp_products(lhs: &[u128], rhs: &[u128]) -> Ordering {
    fn fold(xs: &[u128]) -> Option<u128> {
        xs.iter().try_fold(1u128, |acc, &x| acc.checked_mul(x))
    }
    if let (Some(a), Some(b)) = (fold(lhs), fold(rhs)) {
        return a.cmp(&b);
    }
    let big = |xs: &[u128]| xs.iter().fold(BigUint::one(), |acc, &x| acc * BigUint::from(x));
    big(lhs).cmp(&big(rhs))
}

/// Numerator and denominator of a non-negative rational as `u128`, if both fit.
pub fn parts_u128(r: &Rational) -> Option<(u128, u128)> {
    Some((r.numer().to_u128()?, r.denom().to_u128()?))
}

/// Compares `a / b` (positive integers) against a non-negative rational.
pub fn cmp_ratio(a: &[u128], b: &[u128], r: &Rational) -> Ordering {
    if let Some((n, d)) = parts_u128(r) {
        let mut lhs = a.to_vec();
        lhs.push(d);
        let mut rhs = b.to_vec();
        rhs.push(n);
        return cmp_products(&lhs, &rhs);
    }
    let big = |xs: &[u128]| xs.iter().fold(BigInt::one(), |acc, &x| acc * BigInt::from(x));
    (big(a) * r.denom()).cmp(&(big(b) * r.numer()))
}

/// Validated ε ∈ (0, 1] together with the derived quantities every module
/// reuses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Epsilon {
    value: Rational,
    squared: Rational,
    sq_num: u128,
    sq_den: u128,
}

impl Epsilon {
    pub fn new(value: Rational) -> Result<Self> {
        if !value.is_positive() || value > Rational::one() {
            return Err(Error::InvalidEpsilon(display(&value)));
        }
        let (num, den) = match (value.numer().to_u64(), value.denom().to_u64()) {
            (Some(n), Some(d)) if n <= u32::MAX as u64 && d <= u32::MAX as u64 => (n, d),
            _ => return Err(Error::InvalidEpsilon(display(&value))),
        };
        let squared = &value * &value;
        let (sq_num, sq_den) = ((num * num) as u128, (den * den) as u128);
        Ok(Self { value, squared, sq_num, sq_den })
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::new(parse_rational(s)?)
    }

    pub fn value(&self) -> &Rational {
        &self.value
    }

    pub fn squared(&self) -> &Rational {
        &self.squared
    }

    /// `(numerator, denominator)` of ε² in lowest terms.
    pub fn squared_parts(&self) -> (u128, u128) {
        (self.sq_num, self.sq_den)
    }

    /// `⌊1/ε⌋`.
    pub fn inverse_floor(&self) -> u64 {
        let (q, _) = self.value.denom().div_rem(self.value.numer());
        q.to_u64().unwrap_or(u64::MAX)
    }

    pub fn as_f64(&self) -> f64 {
        to_f64(&self.value)
    }
}

impl std::fmt::Display for Epsilon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&display(&self.value))
    }
}

/// Serializes rationals as `"num/den"` strings.
pub mod serde_rational {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&display(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("1/3").unwrap(), ratio(1, 3));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("2").unwrap(), int(2));
        assert_eq!(parse_rational("-0.5").unwrap(), ratio(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn epsilon_bounds() {
        assert!(Epsilon::parse("0").is_err());
        assert!(Epsilon::parse("3/2").is_err());
        let e = Epsilon::parse("1/3").unwrap();
        assert_eq!(e.inverse_floor(), 3);
        assert_eq!(e.squared(), &ratio(1, 9));
        assert_eq!(Epsilon::parse("0.3").unwrap().inverse_floor(), 3);
        assert_eq!(Epsilon::parse("1").unwrap().inverse_floor(), 1);
    }

    #[test]
    fn product_comparison_falls_back_to_bignum() {
        let big = u128::MAX / 3;
        assert_eq!(cmp_products(&[big, 4], &[big, 3]), Ordering::Greater);
        assert_eq!(cmp_products(&[2, 3], &[6]), Ordering::Equal);
        assert_eq!(cmp_ratio(&[1], &[3], &ratio(1, 3)), Ordering::Equal);
        assert_eq!(cmp_ratio(&[1], &[2], &ratio(1, 3)), Ordering::Greater);
        let tiny = Rational::new(BigInt::one(), BigInt::one() << 200u32);
        assert_eq!(cmp_ratio(&[1], &[u128::MAX], &tiny), Ordering::Greater);
    }

    #[test]
    fn floor_log2_exact() {
        let b = |v: u64| BigUint::from(v);
        assert_eq!(floor_log2(&b(1), &b(1)), 0);
        assert_eq!(floor_log2(&b(8), &b(1)), 3);
        assert_eq!(floor_log2(&b(7), &b(1)), 2);
        assert_eq!(floor_log2(&b(1), &b(3)), -2);
        assert_eq!(floor_log2(&b(1), &b(4)), -2);
        assert_eq!(floor_log2(&b(1), &b(5)), -3);
    }
}
