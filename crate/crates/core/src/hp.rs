//! High-precision real arithmetic (256-bit mantissas, about 77 decimal digits)
//! for identity checks that must not hinge on double rounding.

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigInt;

use crate::exact::Rational;

pub const PRECISION: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Hp {
    cc: Consts,
}

impl Default for Hp {
    fn default() -> Self {
        Hp::new()
    }
}

impl Hp {
    pub fn new() -> Self {
        Hp { cc: Consts::new().expect("constant cache allocation") }
    }

    pub fn float(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PRECISION)
    }

    pub fn int(&self, x: i64) -> BigFloat {
        BigFloat::from_i64(x, PRECISION)
    }

    fn bigint(&mut self, x: &BigInt) -> BigFloat {
        BigFloat::parse(&x.to_string(), Radix::Dec, PRECISION, RM, &mut self.cc)
    }

    pub fn rational(&mut self, r: &Rational) -> BigFloat {
        let n = self.bigint(r.numer());
        let d = self.bigint(r.denom());
        n.div(&d, PRECISION, RM)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, PRECISION, RM)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, PRECISION, RM)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, PRECISION, RM)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, PRECISION, RM)
    }

    pub fn powi(&self, a: &BigFloat, n: usize) -> BigFloat {
        a.powi(n, PRECISION, RM)
    }

    pub fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(PRECISION, RM, &mut self.cc)
    }

    pub fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(PRECISION, RM, &mut self.cc)
    }

    pub fn sqrt(&self, a: &BigFloat) -> BigFloat {
        a.sqrt(PRECISION, RM)
    }

    /// Real cube root; negative arguments give negative roots.
    pub fn cbrt(&self, a: &BigFloat) -> BigFloat {
        if a.is_negative() {
            a.neg().cbrt(PRECISION, RM).neg()
        } else {
            a.cbrt(PRECISION, RM)
        }
    }

    /// `x ln x`, with the limit 0 at `x = 0`.
    pub fn xlnx(&mut self, x: &BigFloat) -> BigFloat {
        if x.is_zero() {
            return self.int(0);
        }
        let l = self.ln(x);
        self.mul(x, &l)
    }

    pub fn to_f64(&mut self, a: &BigFloat) -> f64 {
        if a.is_zero() {
            return 0.0;
        }
        if a.is_nan() {
            return f64::NAN;
        }
        if a.is_inf() {
            return if a.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        let s = a.format(Radix::Dec, RM, &mut self.cc).expect("decimal formatting");
        s.parse().expect("astro-float emits a valid decimal literal")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    #[test]
    fn round_trips_through_f64() {
        let mut hp = Hp::new();
        for x in [0.1, -2.5, 1e-300, 123456.789] {
            assert_eq!(hp.to_f64(&hp.float(x)), x);
        }
        let third = hp.rational(&rat(1, 3));
        assert_eq!(hp.to_f64(&third), 1.0 / 3.0);
    }

    #[test]
    fn elementary_functions() {
        let mut hp = Hp::new();
        let two = hp.int(2);
        let l = hp.ln(&two);
        assert!((hp.to_f64(&l) - std::f64::consts::LN_2).abs() < 1e-16);
        let e = hp.exp(&l);
        assert!((hp.to_f64(&e) - 2.0).abs() < 1e-15);
        let m = hp.int(-27);
        assert_eq!(hp.to_f64(&hp.cbrt(&m)), -3.0);
        let z = hp.int(0);
        let zz = hp.xlnx(&z);
        assert_eq!(hp.to_f64(&zz), 0.0);
    }

    #[test]
    fn carries_more_than_double_precision() {
        let mut hp = Hp::new();
        let one = hp.int(1);
        let tiny = hp.rational(&rat(1, 1_000_000_000_000_000_000));
        let sum = hp.add(&one, &tiny);
        let back = hp.sub(&sum, &one);
        assert!((hp.to_f64(&back) - 1e-18).abs() < 1e-30);
    }
}
