//! Locale-independent number formatting shared by every CSV writer.

/// Formats `x` with 12 significant digits in the style of C's `%.12g`.
pub fn sig12(x: f64) -> String {
    sig(x, 12)
}

/// `%.{digits}g` formatting.
pub fn sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    // rounding first fixes the exponent used for the fixed/scientific choice
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(-2.5), "-2.5");
        assert_eq!(sig12(3.80800719), "3.80800719");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(123456789012.0), "123456789012");
        assert_eq!(sig12(1234567890123.0), "1.23456789012e+12");
        assert_eq!(sig12(0.0001), "0.0001");
        assert_eq!(sig12(0.00001234), "1.234e-05");
        assert_eq!(sig12(9.99999999999951), "10");
        assert_eq!(sig(6.744e-3, 3), "0.00674");
    }

    #[test]
    fn parses_back_to_twelve_digits() {
        for &x in &[std::f64::consts::PI, 1e-9 / 7.0, 2.5512, 6.02e23] {
            let y: f64 = sig12(x).parse().unwrap();
            assert!(((y - x) / x).abs() < 1e-11);
        }
    }
}
