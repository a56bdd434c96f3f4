//! Fixed-width codeword packing.
//!
//! Codes are laid out back to back, `bits` bits each, least significant bit
//! first: bit `b` of code `j` is stream bit `j·bits + b`, and stream bit `k`
//! is bit `k % 8` of byte `k / 8`. The last byte is zero-padded.

use crate::error::{Error, Result};

pub fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack_codes(codes: &[u32], bits: u8) -> Vec<u8> {
    assert!((1..=32).contains(&bits), "code width {bits} out of range");
    let mut out = Vec::with_capacity(packed_len(codes.len(), bits));
    let mask = if bits == 32 { u64::from(u32::MAX) } else { (1u64 << bits) - 1 };
    let mut acc: u64 = 0;
    let mut filled: u32 = 0;
    for &c in codes {
        debug_assert!(u64::from(c) <= mask, "code {c} exceeds {bits} bits");
        acc |= (u64::from(c) & mask) << filled;
        filled += u32::from(bits);
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    out
}

pub fn unpack_codes(bytes: &[u8], bits: u8, count: usize) -> Result<Vec<u32>> {
    if !(1..=32).contains(&bits) {
        return Err(Error::Codec(format!("code width {bits} out of range")));
    }
    let need = packed_len(count, bits);
    if bytes.len() < need {
        return Err(Error::Codec(format!("truncated payload: need {need} bytes, have {}", bytes.len())));
    }
    let mask = if bits == 32 { u64::from(u32::MAX) } else { (1u64 << bits) - 1 };
    let mut out = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut filled: u32 = 0;
    let mut next = bytes.iter();
    for _ in 0..count {
        while filled < u32::from(bits) {
            acc |= u64::from(*next.next().unwrap()) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= bits;
        filled -= u32::from(bits);
    }
    Ok(out)
}
