//! Small helpers for the CSV exports.

use std::fmt::Write as _;

/// `printf("%.{sig}g")`: `sig` significant digits, trailing zeros removed,
/// scientific notation outside `1e-4 <= |v| < 10^sig`.
pub fn format_g(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Joins fields with commas and appends an LF.
pub fn push_row(out: &mut String, fields: &[String]) {
    let _ = write!(out, "{}", fields.join(","));
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::format_g;

    #[test]
    fn matches_printf_g() {
        assert_eq!(format_g(0.5, 9), "0.5");
        assert_eq!(format_g(1.0 / 6.0, 9), "0.166666667");
        assert_eq!(format_g(1.0, 9), "1");
        assert_eq!(format_g(1e-12, 9), "1e-12");
        assert_eq!(format_g(123456789.0, 9), "123456789");
        assert_eq!(format_g(1234567890.0, 9), "1.23456789e+09");
        assert_eq!(format_g(-0.000123, 9), "-0.000123");
        assert_eq!(format_g(0.0, 9), "0");
    }
}
