//! Bit-exact text encoding of `f64` in the C99 `%a` style.
//!
//! Normal numbers are written as `0x1.<13 hex digits>p<exp>`, subnormals
//! and zero as `0x0.<13 hex digits>p-1022` / `0x0.0000000000000p+0`.

const MANTISSA_BITS: u32 = 52;
const MANTISSA_MASK: u64 = (1 << MANTISSA_BITS) - 1;
const EXP_BIAS: i64 = 1023;

/// Formats a finite float. Non-finite values are written as `inf`, `-inf`
/// or `nan`, which [`parse`] rejects.
pub fn format(value: f64) -> String {
    if value.is_nan() {
        return "nan".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let bits = value.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let raw_exp = ((bits >> MANTISSA_BITS) & 0x7ff) as i64;
    let mantissa = bits & MANTISSA_MASK;
    match (raw_exp, mantissa) {
        (0, 0) => format!("{sign}0x0.0000000000000p+0"),
        (0, m) => format!("{sign}0x0.{m:013x}p-1022"),
        (e, m) => format!("{sign}0x1.{m:013x}p{:+}", e - EXP_BIAS),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed hexadecimal float {0:?}")]
pub struct ParseHexFloatError(pub String);

/// Parses the output of [`format`]. Mantissas shorter than 13 digits are
/// accepted and padded on the right.
pub fn parse(text: &str) -> Result<f64, ParseHexFloatError> {
    let fail = || ParseHexFloatError(text.to_string());
    let (negative, rest) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(fail)?;
    let (lead, rest) = rest.split_at_checked(1).ok_or_else(fail)?;
    let (frac, exp) = match rest.strip_prefix('.') {
        Some(body) => body.split_once('p').ok_or_else(fail)?,
        None => ("", rest.strip_prefix('p').ok_or_else(fail)?),
    };
    if frac.len() > 13 || !frac.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(fail());
    }
    let exp: i64 = exp.parse().map_err(|_| fail())?;
    let mantissa = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).map_err(|_| fail())? << (4 * (13 - frac.len()))
    };
    let magnitude = match lead {
        "1" => {
            let biased = exp + EXP_BIAS;
            if !(1..=2046).contains(&biased) {
                return Err(fail());
            }
            ((biased as u64) << MANTISSA_BITS) | mantissa
        }
        "0" if mantissa == 0 => 0,
        "0" if exp == -1022 => mantissa,
        _ => return Err(fail()),
    };
    let sign = if negative { 1u64 << 63 } else { 0 };
    Ok(f64::from_bits(sign | magnitude))
}
