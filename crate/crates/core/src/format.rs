//! Number formatting shared by the text outputs.

/// Scientific notation with 9 significant digits, e.g. `1.23456789e3`.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Bit pattern of an f64 as `0x` followed by 16 lowercase hex digits.
pub fn f64_to_hex(x: f64) -> String {
    format!("0x{:016x}", x.to_bits())
}

pub fn f64_from_hex(s: &str) -> Option<f64> {
    let digits = s.strip_prefix("0x")?;
    if digits.len() != 16 {
        return None;
    }
    u64::from_str_radix(digits, 16).ok().map(f64::from_bits)
}
