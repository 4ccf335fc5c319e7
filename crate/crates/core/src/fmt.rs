//! C-style number formatting used by the text output formats.
//!
//! Reports use `%.6g` and STL export uses `%.9e`; Rust's own `{:e}` prints
//! exponents without sign padding, so both are reproduced here.

/// Formats like C's `%.{precision}e` (e.g. `1.000000000e+00`).
pub fn format_e(x: f64, precision: usize) -> String {
    if !x.is_finite() {
        return non_finite(x);
    }
    let s = format!("{:.*e}", precision, x);
    let (mantissa, exp) = s.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}", c_exponent(exp))
}

/// Formats like C's `%.{precision}g`.
pub fn format_g(x: f64, precision: usize) -> String {
    if !x.is_finite() {
        return non_finite(x);
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        format!("{}e{}", strip_zeros(mantissa), c_exponent(exp))
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn c_exponent(exp: i32) -> String {
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{:02}", exp.abs())
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn non_finite(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_matches_printf() {
        // Reference strings from printf("%.6g").
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (55.0, "55"),
            (-3.7, "-3.7"),
            (1.0 / 3.0, "0.333333"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (37926.0, "37926"),
            (999999.5, "1e+06"),
            (1.6666666666, "1.66667"),
            (-0.2, "-0.2"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g(x, 6), want, "x = {x}");
        }
    }

    #[test]
    fn e_matches_printf() {
        assert_eq!(format_e(1.0, 9), "1.000000000e+00");
        assert_eq!(format_e(-0.5, 9), "-5.000000000e-01");
        assert_eq!(format_e(12345.678, 9), "1.234567800e+04");
        assert_eq!(format_e(0.0, 9), "0.000000000e+00");
        assert_eq!(format_e(1e-120, 2), "1.00e-120");
    }
}
