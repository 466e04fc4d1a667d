//! C-style `%.12g` number formatting for CSV output.

const SIG_DIGITS: usize = 12;

/// Formats like C's `printf("%.12g", v)`. NaN prints as `nan`.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Rust's exponent form rounds to the requested significant digits, which
    // also settles the exponent after rounding (9.99...e2 -> 1.0e3).
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa), sign, exp.abs())
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `fmt_g` of an optional value, with `nan` for missing.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), fmt_g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (2.0 / 9.0, "0.222222222222"),
            (1.0 / 3.0, "0.333333333333"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (999999999999.5, "1e+12"),
            (1e100, "1e+100"),
            (f64::NAN, "nan"),
            (-3.0e-7, "-3e-07"),
            (0.5037, "0.5037"),
        ];
        for (v, want) in cases {
            assert_eq!(fmt_g(v), want, "{v}");
        }
        assert_eq!(fmt_opt(None), "nan");
    }
}
