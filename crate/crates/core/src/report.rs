//! Serialized values and output helpers shared by the CLI and the FFI.
//!
//! Exact rationals serialize as `{"num": "...", "den": "..."}` with decimal
//! digit strings; floats use the shortest round-trip decimal.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::exact::{self, Rational};

#[derive(Debug, Clone, PartialEq)]
pub enum Number {
    Exact(Rational),
    Float(f64),
}

impl Number {
    pub fn to_f64(&self) -> f64 {
        match self {
            Number::Exact(r) => exact::to_f64(r),
            Number::Float(v) => *v,
        }
    }

    pub fn ln(&self) -> f64 {
        match self {
            Number::Exact(r) => exact::ln_rational(r),
            Number::Float(v) => v.ln(),
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Number::Exact(r) => Some(r),
            Number::Float(_) => None,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Exact(r) => write!(f, "{r}"),
            Number::Float(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RatioRepr {
    num: String,
    den: String,
}

pub fn rational_to_json(r: &Rational) -> serde_json::Value {
    serde_json::json!({ "num": r.numer().to_string(), "den": r.denom().to_string() })
}

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Number::Exact(r) => {
                RatioRepr { num: r.numer().to_string(), den: r.denom().to_string() }.serialize(s)
            }
            Number::Float(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Ratio(RatioRepr),
            Float(f64),
        }
        match Repr::deserialize(d)? {
            Repr::Float(v) => Ok(Number::Float(v)),
            Repr::Ratio(r) => {
                let num: BigInt = r.num.parse().map_err(D::Error::custom)?;
                let den: BigInt = r.den.parse().map_err(D::Error::custom)?;
                if den == BigInt::from(0) {
                    return Err(D::Error::custom("zero denominator"));
                }
                Ok(Number::Exact(BigRational::new(num, den)))
            }
        }
    }
}

/// Writes CSV rows with a fixed header; fields never contain separators.
pub fn csv_document(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.join(","));
        out.push_str("\r\n");
    }
    out
}

pub fn float_field(v: f64) -> String {
    // shortest round-trip representation, same as the JSON output
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
