//! Lenient numeric conversion for type-mismatch repairs ("12k" -> 12000).

/// Accepts `[currency][sign]digits[.digits][suffix]` with optional comma
/// thousands separators and surrounding whitespace.
///
/// Currency is one of `$ € £`; suffix is `k`/`K` (10^3), `m`/`M` (10^6) or
/// `b`/`B` (10^9). Returns `None` for anything else or a non-finite result.
pub fn convert_numeric_string(text: &str) -> Option<f64> {
    let mut s = text.trim();
    for sym in ['$', '€', '£'] {
        if let Some(rest) = s.strip_prefix(sym) {
            s = rest;
            break;
        }
    }
    let mut number = String::with_capacity(s.len());
    if let Some(rest) = s.strip_prefix(['+', '-']) {
        number.push(s.as_bytes()[0] as char);
        s = rest;
    }

    let (body, multiplier) = match s.as_bytes().last() {
        Some(b'k' | b'K') => (&s[..s.len() - 1], 1e3),
        Some(b'm' | b'M') => (&s[..s.len() - 1], 1e6),
        Some(b'b' | b'B') => (&s[..s.len() - 1], 1e9),
        _ => (s, 1.0),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };

    if !valid_integer_part(int_part) {
        return None;
    }
    number.extend(int_part.chars().filter(|&c| c != ','));
    if let Some(frac) = frac_part {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        number.push('.');
        number.push_str(frac);
    }
    let value = number.parse::<f64>().ok()? * multiplier;
    value.is_finite().then_some(value)
}

/// Plain digits, or 1-3 digits followed by `,ddd` groups.
fn valid_integer_part(s: &str) -> bool {
    if s.is_empty() {
        return false;
    }
    let mut groups = s.split(',');
    let head = groups.next().unwrap_or_default();
    if head.is_empty() || !head.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    if !s.contains(',') {
        return true;
    }
    head.len() <= 3 && groups.all(|g| g.len() == 3 && g.bytes().all(|b| b.is_ascii_digit()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{format_number, parse_numeric_cell};
    use proptest::prelude::*;

    #[test]
    fn twelve_k_suffix() {
        assert_eq!(convert_numeric_string("12k"), Some(12000.0));
    }

    #[test]
    fn rejects() {
        for s in ["twelve", "", "k", "$", "12kk", "1,23", "12 k", "1e3", "--1", "1.", ".5", "12,3456"] {
            assert_eq!(convert_numeric_string(s), None, "{s:?}");
        }
    }

    proptest! {
        #[test]
        fn accepted_output_renders_as_strict_number(s in "[ ]?[$€£]?[+-]?[0-9]{1,7}(\\.[0-9]{1,3})?[kKmMbB]?[ ]?") {
            if let Some(v) = convert_numeric_string(&s) {
                prop_assert!(v.is_finite());
                prop_assert_eq!(parse_numeric_cell(&format_number(v)), Some(v));
            }
        }

        #[test]
        fn never_panics_or_produces_non_finite(s in "\\PC{0,12}") {
            if let Some(v) = convert_numeric_string(&s) {
                prop_assert!(v.is_finite());
            }
        }
    }
}
