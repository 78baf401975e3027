use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::Variable;

/// Fixed-width signed-integer encoding of one variable: `[+|-]DDDD,Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableCodec {
    pub variable: Variable,
    /// Divisor applied to the encoded integer.
    pub scale: f64,
    /// Encoded integer meaning "absent".
    pub missing_sentinel: i64,
    /// Digit count of the numeric part, excluding the sign.
    pub field_width: usize,
    /// Whether the numeric part carries a mandatory `+`/`-` sign.
    pub signed: bool,
}

/// Which single-digit quality codes count as usable data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityPolicy {
    pub accepted: BTreeSet<u8>,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        QualityPolicy {
            accepted: [0, 1, 4, 5].into_iter().collect(),
        }
    }
}

impl QualityPolicy {
    pub fn accepts(&self, quality: u8) -> bool {
        self.accepted.contains(&quality)
    }
}

/// Value part of a decoded field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodedField {
    pub value: f64,
    pub quality: u8,
    pub is_missing: bool,
}

impl VariableCodec {
    pub fn new(
        variable: Variable,
        scale: f64,
        missing_sentinel: i64,
        field_width: usize,
        signed: bool,
    ) -> Result<Self, IngestError> {
        let codec = VariableCodec {
            variable,
            scale,
            missing_sentinel,
            field_width,
            signed,
        };
        codec.validate()?;
        Ok(codec)
    }

    /// ISD-style layout: temperature and dewpoint `+TTTT` (0.1 °C), wind angle
    /// `DDD` (degrees), wind rate `SSSS` (0.1 m/s), pressure `PPPPP` (0.1 hPa).
    pub fn isd_default(variable: Variable) -> Self {
        let (scale, sentinel, width, signed) = match variable {
            Variable::Temperature | Variable::Dewpoint => (10.0, 9999, 4, true),
            Variable::WindAngle => (1.0, 999, 3, false),
            Variable::WindRate => (10.0, 9999, 4, false),
            Variable::SeaLevelPressure => (10.0, 99999, 5, false),
        };
        VariableCodec {
            variable,
            scale,
            missing_sentinel: sentinel,
            field_width: width,
            signed,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(IngestError::BadCodec(format!("{}: scale must be > 0", self.variable)));
        }
        if !(1..=15).contains(&self.field_width) {
            return Err(IngestError::BadCodec(format!(
                "{}: field width {} outside 1..=15",
                self.variable, self.field_width
            )));
        }
        Ok(())
    }

    /// Largest magnitude representable in `field_width` digits.
    pub fn max_magnitude(&self) -> i64 {
        10i64.pow(self.field_width as u32) - 1
    }

    /// Decode `[+|-]D{width},Q`. The sign is mandatory for signed codecs and
    /// rejected for unsigned ones, so every accepted string has one canonical form.
    pub fn decode(&self, encoded: &str, policy: &QualityPolicy) -> Result<DecodedField, IngestError> {
        let bytes = encoded.as_bytes();
        if let Some(pos) = bytes.iter().position(|b| !b.is_ascii()) {
            return Err(IngestError::malformed(None, pos, "non-ASCII byte"));
        }
        let sign_len = usize::from(self.signed);
        let expected_len = sign_len + self.field_width + 2;
        if bytes.len() != expected_len {
            return Err(IngestError::malformed(
                None,
                bytes.len().min(expected_len),
                format!("expected {expected_len} bytes for {}, found {}", self.variable, bytes.len()),
            ));
        }
        let negative = if self.signed {
            match bytes[0] {
                b'+' => false,
                b'-' => true,
                _ => return Err(IngestError::malformed(None, 0, "expected sign `+` or `-`")),
            }
        } else {
            false
        };
        let digits = &bytes[sign_len..sign_len + self.field_width];
        let mut magnitude: i64 = 0;
        for (i, &b) in digits.iter().enumerate() {
            if !b.is_ascii_digit() {
                return Err(IngestError::malformed(None, sign_len + i, "expected digit"));
            }
            magnitude = magnitude * 10 + i64::from(b - b'0');
        }
        let comma = sign_len + self.field_width;
        if bytes[comma] != b',' {
            return Err(IngestError::malformed(None, comma, "expected `,` before quality code"));
        }
        let q = bytes[comma + 1];
        if !q.is_ascii_digit() {
            return Err(IngestError::malformed(None, comma + 1, "quality code must be a digit"));
        }
        let quality = q - b'0';
        let integer = if negative { -magnitude } else { magnitude };

        let mut is_missing = integer == self.missing_sentinel || !policy.accepts(quality);
        let mut value = integer as f64 / self.scale;
        if self.variable == Variable::WindAngle && !is_missing {
            if value == 360.0 {
                // ISD reports due north as 360
                value = 0.0;
            } else if !(0.0..360.0).contains(&value) {
                is_missing = true;
            }
        }
        if is_missing {
            value = f64::NAN;
        }
        Ok(DecodedField {
            value,
            quality,
            is_missing,
        })
    }

    /// Encode a value in the codec grid. Missing fields encode the sentinel.
    /// Returns `None` when the value does not fit the field width.
    pub fn encode(&self, value: Option<f64>, quality: u8) -> Option<String> {
        let integer = match value {
            None => self.missing_sentinel,
            Some(v) if v.is_finite() => (v * self.scale).round() as i64,
            Some(_) => return None,
        };
        self.encode_integer(integer, quality)
    }

    pub fn encode_integer(&self, integer: i64, quality: u8) -> Option<String> {
        if quality > 9 || integer.abs() > self.max_magnitude() || (!self.signed && integer < 0) {
            return None;
        }
        let width = self.field_width;
        let magnitude = integer.abs();
        Some(if self.signed {
            let sign = if integer < 0 { '-' } else { '+' };
            format!("{sign}{magnitude:0width$},{quality}")
        } else {
            format!("{magnitude:0width$},{quality}")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn temp() -> VariableCodec {
        VariableCodec::isd_default(Variable::Temperature)
    }

    #[test]
    fn decodes_documented_temperature() {
        let f = temp().decode("+0130,1", &QualityPolicy::default()).unwrap();
        assert_eq!(f.value, 13.0);
        assert_eq!(f.quality, 1);
        assert!(!f.is_missing);
    }

    #[test]
    fn sentinel_is_missing() {
        let f = temp().decode("+9999,9", &QualityPolicy::default()).unwrap();
        assert!(f.is_missing);
        assert!(f.value.is_nan());
    }

    #[test]
    fn negative_value_round_trips() {
        let codec = temp();
        let f = codec.decode("-0005,1", &QualityPolicy::default()).unwrap();
        assert_eq!(f.value, -0.5);
        assert_eq!(codec.encode(Some(f.value), f.quality).unwrap(), "-0005,1");
    }

    #[test]
    fn rejected_quality_is_missing() {
        let f = temp().decode("+0130,3", &QualityPolicy::default()).unwrap();
        assert!(f.is_missing);
    }

    #[test]
    fn grammar_errors_carry_offsets() {
        let codec = temp();
        let p = QualityPolicy::default();
        let offset = |s: &str| match codec.decode(s, &p) {
            Err(IngestError::MalformedField { offset, .. }) => offset,
            other => panic!("expected malformed, got {other:?}"),
        };
        assert_eq!(offset("0130,1"), 6);
        assert_eq!(offset("*0130,1"), 0);
        assert_eq!(offset("+01x0,1"), 3);
        assert_eq!(offset("+0130;1"), 5);
        assert_eq!(offset("+0130,x"), 6);
        assert_eq!(offset("+0é30,1"), 2);
    }

    #[test]
    fn unsigned_codecs() {
        let p = QualityPolicy::default();
        let angle = VariableCodec::isd_default(Variable::WindAngle);
        assert_eq!(angle.decode("270,1", &p).unwrap().value, 270.0);
        assert_eq!(angle.decode("360,1", &p).unwrap().value, 0.0);
        assert!(angle.decode("999,9", &p).unwrap().is_missing);
        assert!(angle.decode("400,1", &p).unwrap().is_missing);
        assert!(angle.decode("+270,1", &p).is_err());
        let slp = VariableCodec::isd_default(Variable::SeaLevelPressure);
        assert!((slp.decode("10132,1", &p).unwrap().value - 1013.2).abs() < 1e-12);
        assert_eq!(slp.encode(Some(1013.2), 1).unwrap(), "10132,1");
        assert!(slp.encode(Some(-1.0), 1).is_none());
    }

    #[test]
    fn bad_codec_rejected() {
        assert!(VariableCodec::new(Variable::Temperature, 0.0, 9999, 4, true).is_err());
        assert!(VariableCodec::new(Variable::Temperature, 10.0, 9999, 0, true).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_identity(integer in -9998i64..=9998, quality in prop::sample::select(vec![0u8, 1, 4, 5])) {
            let codec = temp();
            let s = codec.encode_integer(integer, quality).unwrap();
            let f = codec.decode(&s, &QualityPolicy::default()).unwrap();
            prop_assert!(!f.is_missing);
            prop_assert_eq!(codec.encode(Some(f.value), f.quality).unwrap(), s);
        }
    }
}
