//! Number formatting shared by every output file.

use serde_json::Value;

/// Six significant digits; infinities as `+inf` / `-inf`.
pub fn fmt_eps(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "+inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{}", round_sig6(x))
    }
}

fn round_sig6(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// JSON form of an epsilon: a rounded number, or the `+inf` string.
pub fn eps_json(x: f64) -> Value {
    if x.is_finite() {
        serde_json::json!(round_sig6(x))
    } else if x.is_nan() {
        Value::Null
    } else {
        Value::String(fmt_eps(x))
    }
}

/// Shortest round-trip representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}
