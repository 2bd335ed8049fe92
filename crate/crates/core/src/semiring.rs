//! Probability accumulators for the dynamic programs: exact rationals, and
//! natural-log floats combined with max-plus-log1p so that deep horizons do
//! not underflow.

use std::fmt;

use crate::channel::ChannelParams;
use crate::error::Result;
use crate::exact::{self, Rational};
use crate::report::Number;

pub trait Semiring: Clone + PartialEq + fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn from_rational(r: &Rational) -> Self;
    /// `(p, q)` of the channel in this representation.
    fn channel(ch: &ChannelParams) -> Result<(Self, Self)>;
    fn ln(&self) -> f64;
    fn to_number(&self) -> Number;
    fn is_null(&self) -> bool;
}

impl Semiring for Rational {
    fn zero() -> Self {
        exact::zero()
    }

    fn one() -> Self {
        exact::one()
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn mul(&self, other: &Self) -> Self {
        self * other
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn channel(ch: &ChannelParams) -> Result<(Self, Self)> {
        Ok((ch.p_exact()?, ch.q_exact()?))
    }

    fn ln(&self) -> f64 {
        exact::ln_rational(self)
    }

    fn to_number(&self) -> Number {
        Number::Exact(self.clone())
    }

    fn is_null(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }
}

/// A nonnegative value stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(pub f64);

impl LogProb {
    pub fn from_f64(v: f64) -> Self {
        LogProb(v.ln())
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }
}

/// `ln(e^a + e^b)` without overflow or underflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl Semiring for LogProb {
    fn zero() -> Self {
        LogProb(f64::NEG_INFINITY)
    }

    fn one() -> Self {
        LogProb(0.0)
    }

    fn add(&self, other: &Self) -> Self {
        LogProb(log_add(self.0, other.0))
    }

    fn mul(&self, other: &Self) -> Self {
        LogProb(self.0 + other.0)
    }

    fn from_rational(r: &Rational) -> Self {
        LogProb(exact::ln_rational(r))
    }

    fn channel(ch: &ChannelParams) -> Result<(Self, Self)> {
        // ln q via ln_1p keeps full precision for small p
        Ok((LogProb(ch.p().ln()), LogProb((-ch.p()).ln_1p())))
    }

    fn ln(&self) -> f64 {
        self.0
    }

    fn to_number(&self) -> Number {
        Number::Float(self.0.exp())
    }

    fn is_null(&self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}
