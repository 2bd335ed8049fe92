//! Helpers over arbitrary-precision rationals: literal parsing, logarithms of
//! values far below `f64::MIN_POSITIVE`, and certified cube-root brackets.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(v: i64) -> Rational {
    BigRational::from_integer(BigInt::from(v))
}

/// Parses `"a/b"` or a bare integer.
pub fn parse_fraction(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: BigInt = a.trim().parse().ok()?;
            let b: BigInt = b.trim().parse().ok()?;
            if b.is_zero() {
                return None;
            }
            Some(BigRational::new(a, b))
        }
        None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

/// Parses a plain decimal literal ("0.25", "3", ".5") into the exact rational it denotes.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
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
    let den = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let r = BigRational::new(num, den);
    Some(if neg { -r } else { r })
}

/// Natural log of a positive big integer, accurate to f64 precision at any magnitude.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap() as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of a positive rational; `-inf` for zero.
pub fn ln_rational(r: &Rational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    assert!(r.is_positive(), "ln of a negative rational");
    ln_biguint(r.numer().magnitude()) - ln_biguint(r.denom().magnitude())
}

/// Converts to f64 without spurious underflow to zero for moderately small values.
pub fn to_f64(r: &Rational) -> f64 {
    match r.to_f64() {
        Some(v) if v != 0.0 || r.is_zero() => v,
        _ => {
            let sign = if r.is_negative() { -1.0 } else { 1.0 };
            sign * ln_rational(&r.abs()).exp()
        }
    }
}

pub fn pow(r: &Rational, e: usize) -> Rational {
    num_traits::pow(r.clone(), e)
}

/// Certified bracket `[lo, hi]` around `r^{1/3}` for `r >= 0`, with width at most
/// `1 / (den(r) * 2^bits)`. When `r` is a perfect cube both ends coincide.
pub fn cbrt_bracket(r: &Rational, bits: u64) -> (Rational, Rational) {
    assert!(!r.is_negative(), "cube-root bracket of a negative rational");
    // r^{1/3} = (a b^2)^{1/3} / b
    let a = r.numer().magnitude();
    let b = r.denom().magnitude();
    let scaled = (a * b * b) << (3 * bits);
    let root = scaled.cbrt();
    let den = BigInt::from_biguint(Sign::Plus, b << bits);
    let lo = BigRational::new(BigInt::from_biguint(Sign::Plus, root.clone()), den.clone());
    let exact = &root * &root * &root == scaled;
    let hi = if exact {
        lo.clone()
    } else {
        BigRational::new(BigInt::from_biguint(Sign::Plus, root + 1u32), den)
    };
    (lo, hi)
}

/// Outcome of comparing an exact rational against an irrational bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certified {
    Less,
    Equal,
    Greater,
    /// Interval refinement hit the precision cap without separating the values.
    Undecided,
}

impl Certified {
    pub fn from_ordering(o: Ordering) -> Self {
        match o {
            Ordering::Less => Certified::Less,
            Ordering::Equal => Certified::Equal,
            Ordering::Greater => Certified::Greater,
        }
    }

    pub fn is_le(self) -> bool {
        matches!(self, Certified::Less | Certified::Equal)
    }

    pub fn is_ge(self) -> bool {
        matches!(self, Certified::Greater | Certified::Equal)
    }
}

/// Compares `value` against a quantity known only through a bracketing
/// function `bracket(bits) -> (lo, hi)`, refining until separated.
pub fn certify_cmp(
    value: &Rational,
    mut bracket: impl FnMut(u64) -> (Rational, Rational),
) -> Certified {
    let mut bits = 64;
    while bits <= 1 << 14 {
        let (lo, hi) = bracket(bits);
        if lo == hi {
            return Certified::from_ordering(value.cmp(&lo));
        }
        if value < &lo {
            return Certified::Less;
        }
        if value > &hi {
            return Certified::Greater;
        }
        bits *= 2;
    }
    Certified::Undecided
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn zero() -> Rational {
    Rational::zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_fraction("1/10"), Some(rat(1, 10)));
        assert_eq!(parse_fraction(" 3 / 6 "), Some(rat(1, 2)));
        assert_eq!(parse_fraction("1/0"), None);
        assert_eq!(parse_fraction("x/2"), None);
        assert_eq!(parse_decimal("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_decimal(".5"), Some(rat(1, 2)));
        assert_eq!(parse_decimal("2"), Some(rat_int(2)));
        assert_eq!(parse_decimal("1e-3"), None);
    }

    #[test]
    fn ln_of_tiny_rational() {
        let tiny = pow(&rat(1, 10), 400);
        assert!((ln_rational(&tiny) + 400.0 * 10f64.ln()).abs() < 1e-9);
        assert!(to_f64(&tiny) == 0.0 || to_f64(&tiny) < 1e-300);
        assert_eq!(ln_rational(&zero()), f64::NEG_INFINITY);
    }

    #[test]
    fn cube_root_brackets_are_certified() {
        let (lo, hi) = cbrt_bracket(&rat(8, 27), 32);
        assert_eq!(lo, rat(2, 3));
        assert_eq!(hi, rat(2, 3));
        let r = rat(1, 10);
        let (lo, hi) = cbrt_bracket(&r, 40);
        assert!(pow(&lo, 3) <= r && pow(&hi, 3) >= r);
        assert!(to_f64(&(hi - lo)) < 1e-12);
    }

    #[test]
    fn certified_compare_refines() {
        // 1/2 against 2^{-1/3} ~ 0.7937
        let c = certify_cmp(&rat(1, 2), |bits| cbrt_bracket(&rat(1, 2), bits));
        assert_eq!(c, Certified::Less);
        let c = certify_cmp(&rat(4, 5), |bits| cbrt_bracket(&rat(1, 2), bits));
        assert_eq!(c, Certified::Greater);
    }
}
