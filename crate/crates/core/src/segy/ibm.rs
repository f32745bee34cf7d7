/// Decodes an IBM System/360 single-precision hexadecimal float.
///
/// Every bit pattern decodes; the result is exact because a 24-bit fraction
/// scaled by `16^(e - 64)` always fits an `f64`.
pub fn ibm_to_ieee(word: u32) -> f64 {
    let negative = word >> 31 == 1;
    let exponent = ((word >> 24) & 0x7f) as i32;
    let fraction = (word & 0x00ff_ffff) as f64;
    let magnitude = libm::ldexp(fraction, 4 * (exponent - 64) - 24);
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Decodes a big-endian IEEE single-precision float.
pub fn ieee_be_to_f64(word: u32) -> f64 {
    f32::from_bits(word) as f64
}
