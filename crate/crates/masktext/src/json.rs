//! Canonical JSON output: sorted keys, floats at 6 significant digits,
//! `null` for non-finite values, no whitespace, `\n` line endings.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Formats a float like C's `%.6g`, without padding zeros.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let rounded: f64 = sci.parse().expect("reparse");
        let digits = (5 - exp).max(0) as usize;
        trim_zeros(format!("{rounded:.digits$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            // serde_json's default map is ordered by key
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_value(x, out);
            }
            out.push('}');
        }
    }
}

pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("output records serialize");
    let mut out = String::new();
    write_value(&v, &mut out);
    out
}

/// One document followed by a newline.
pub fn canonical_document<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = to_canonical(value);
    s.push('\n');
    s.into_bytes()
}

/// One canonical record per line.
pub fn canonical_lines<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_canonical(r));
        out.push('\n');
    }
    out.into_bytes()
}

/// Parses JSON Lines, skipping blank lines; errors name the 1-based line.
pub fn parse_lines<T: serde::de::DeserializeOwned>(text: &str, context: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(context, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn parse_document<T: serde::de::DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::format(context, e.to_string()))
}
