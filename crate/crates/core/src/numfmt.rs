//! `%g`-style decimal formatting with a fixed number of significant digits.

/// Format `x` with `digits` significant digits, trailing zeros stripped.
///
/// Uses plain decimal notation when the decimal exponent lies in
/// `[-5, digits)` and scientific notation otherwise, like C's `%g`.
/// Non-finite values print as `nan`, `inf` or `-inf`.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", strip_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Round `x` to `digits` significant digits through its decimal form, so
/// that `fmt_sig` of the result re-parses to the same bits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    fmt_sig(x, digits).parse().expect("fmt_sig output parses")
}
