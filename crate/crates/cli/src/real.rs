//! Floats that may be infinite, written as JSON numbers or the strings
//! `"inf"`, `"-inf"` and `"nan"`.

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;

        impl Visitor<'_> for RealVisitor {
            type Value = Real;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str(r#"a number or one of "inf", "-inf", "nan""#)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v {
                    "inf" | "+inf" | "Infinity" => Ok(Real(f64::INFINITY)),
                    "-inf" | "-Infinity" => Ok(Real(f64::NEG_INFINITY)),
                    "nan" | "NaN" => Ok(Real(f64::NAN)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        d.deserialize_any(RealVisitor)
    }
}

pub fn reals(values: &[f64]) -> Vec<Real> {
    values.iter().copied().map(Real).collect()
}

pub fn real_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<Real>> {
    rows.into_iter().map(|r| reals(&r)).collect()
}

pub fn plain_rows(rows: &[Vec<Real>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|x| x.0).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinities_round_trip_as_strings() {
        let v = vec![Real(1.5), Real(f64::INFINITY), Real(f64::NEG_INFINITY), Real(0.1 + 0.2)];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[1.5,"inf","-inf",0.30000000000000004]"#);
        let back: Vec<Real> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn integers_and_bad_strings() {
        assert_eq!(serde_json::from_str::<Real>("3").unwrap(), Real(3.0));
        assert!(serde_json::from_str::<Real>(r#""lots""#).is_err());
    }
}
