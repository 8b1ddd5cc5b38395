//! Number formatting and serialization helpers for JSON and CSV output.
//!
//! JSON numbers carry 17 significant digits (enough to round-trip any f64),
//! CSV numbers carry 10. Non-finite values become `null` in JSON and `NaN` /
//! `inf` in CSV.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Result;

pub const JSON_DIGITS: usize = 17;
pub const CSV_DIGITS: usize = 10;

/// Formats `x` like C's `%.{digits}g`: scientific notation for very small or
/// very large magnitudes, trailing zeros trimmed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_number(x: f64) -> String {
    format_significant(x, CSV_DIGITS)
}

/// Pretty JSON formatter writing floats with [`JSON_DIGITS`] significant
/// digits.
pub struct SignificantFormatter {
    inner: PrettyFormatter<'static>,
}

impl Default for SignificantFormatter {
    fn default() -> Self {
        Self { inner: PrettyFormatter::new() }
    }
}

impl Formatter for SignificantFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return writer.write_all(b"null");
        }
        let mut s = format_significant(value, JSON_DIGITS);
        // Keep the value typed as a float for readers that care.
        if !s.contains(['.', 'e']) {
            s.push_str(".0");
        }
        writer.write_all(s.as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON with 17 significant digits, followed by a
/// newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut writer: W, value: &T) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut writer, SignificantFormatter::default());
    value.serialize(&mut ser)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    write_json(&mut buf, value)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// `<experiment>-<model>-<nu>-<n>.csv`, with the model label reduced to
/// filename-safe characters.
pub fn output_file_name(experiment: &str, model: &str, nu: f64, n: usize, extension: &str) -> String {
    let model: String = model.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    let model = model.trim_matches('_');
    let model = if model.is_empty() { "model" } else { model };
    format!("{experiment}-{model}-{}-{n}.{extension}", format_significant(nu, 6))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.1, 17), "0.10000000000000001");
        assert_eq!(format_significant(1.0, 17), "1");
        assert_eq!(format_significant(0.25, 10), "0.25");
        assert_eq!(format_significant(1.0 / 3.0, 10), "0.3333333333");
        assert_eq!(format_significant(3.3546262790251185e-4, 10), "0.0003354626279");
        assert_eq!(format_significant(1.5e-7, 10), "1.5e-07");
        assert_eq!(format_significant(2.5e12, 10), "2.5e+12");
        assert_eq!(format_significant(-42.0, 10), "-42");
        assert_eq!(format_significant(f64::NAN, 10), "NaN");
    }

    #[test]
    fn json_floats_round_trip() {
        let values = vec![0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, -2.0, f64::MIN_POSITIVE];
        let text = to_json_string(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, values);
        assert!(text.contains("-2.0"));
    }

    #[test]
    fn json_non_finite_is_null() {
        let text = to_json_string(&[f64::INFINITY]).unwrap();
        assert!(text.contains("null"));
    }

    #[test]
    fn file_names() {
        assert_eq!(output_file_name("verify", "tree:\"food\"", 0.25, 5000, "csv"), "verify-tree__food-0.25-5000.csv");
        assert_eq!(output_file_name("sweep", "constant", 1.0, 100, "csv"), "sweep-constant-1-100.csv");
    }
}
