//! Classical bits and bit-string helpers.
//!
//! Bit strings are kept as `Vec<Bit>` throughout the library (keys here are a
//! few thousand bits, clarity beats packing). Packing to bytes happens only at
//! the wire and digest boundaries, MSB-first within each byte.

use std::fmt;
use std::ops::BitXor;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A single classical bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub fn as_bool(self) -> bool {
        self.0
    }

    pub fn as_u8(self) -> u8 {
        u8::from(self.0)
    }

    pub fn flip(self) -> Bit {
        Bit(!self.0)
    }
}

impl From<bool> for Bit {
    fn from(value: bool) -> Self {
        Bit(value)
    }
}

impl BitXor for Bit {
    type Output = Bit;

    fn bitxor(self, rhs: Bit) -> Bit {
        Bit(self.0 ^ rhs.0)
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

// On the wire a bit is the integer 0 or 1.
impl Serialize for Bit {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Bit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(deserializer)? {
            0 => Ok(Bit::ZERO),
            1 => Ok(Bit::ONE),
            other => Err(D::Error::custom(format!("bit must be 0 or 1, got {other}"))),
        }
    }
}

/// XOR-fold of a bit slice (even parity = 0).
pub fn parity_of(bits: &[Bit]) -> Bit {
    bits.iter().fold(Bit::ZERO, |acc, &b| acc ^ b)
}

/// Number of positions at which two equal-length bit strings differ.
pub fn hamming_distance(a: &[Bit], b: &[Bit]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "hamming distance needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Pack bits into bytes, MSB-first; the last byte is zero-padded.
pub fn pack_bits(bits: &[Bit]) -> Vec<u8> {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, bit) in bits.iter().enumerate() {
        if bit.as_bool() {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    bytes
}

/// Inverse of [`pack_bits`]. Fails if the byte count does not match `bit_len`
/// or a padding bit is set.
pub fn unpack_bits(bytes: &[u8], bit_len: usize) -> Result<Vec<Bit>> {
    if bytes.len() != bit_len.div_ceil(8) {
        return Err(Error::InvalidInput(format!(
            "{} bytes cannot hold exactly {} bits",
            bytes.len(),
            bit_len
        )));
    }
    if bit_len % 8 != 0 {
        let tail = bytes[bytes.len() - 1];
        let mask = 0xffu8 >> (bit_len % 8);
        if tail & mask != 0 {
            return Err(Error::InvalidInput(
                "padding bits past the declared length must be zero".into(),
            ));
        }
    }
    Ok((0..bit_len)
        .map(|i| Bit::from(bytes[i / 8] & (0x80 >> (i % 8)) != 0))
        .collect())
}

/// Parse a string of `0`/`1` characters. Test convenience.
pub fn bits_from_str(s: &str) -> Result<Vec<Bit>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(Bit::ZERO),
            '1' => Ok(Bit::ONE),
            other => Err(Error::InvalidInput(format!("not a bit: {other:?}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_and_flip() {
        assert_eq!(Bit::ZERO ^ Bit::ONE, Bit::ONE);
        assert_eq!(Bit::ONE ^ Bit::ONE, Bit::ZERO);
        assert_eq!(Bit::ONE.flip(), Bit::ZERO);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let bits = bits_from_str("10110011101").unwrap();
        let bytes = pack_bits(&bits);
        assert_eq!(bytes, vec![0b1011_0011, 0b1010_0000]);
        assert_eq!(unpack_bits(&bytes, bits.len()).unwrap(), bits);
    }

    #[test]
    fn unpack_rejects_bad_padding() {
        assert!(unpack_bits(&[0xff], 4).is_err());
        assert!(unpack_bits(&[0xf0, 0x00], 4).is_err());
    }

    #[test]
    fn parity_matches_sum_mod_two() {
        let bits = bits_from_str("1101001").unwrap();
        let ones = bits.iter().filter(|b| b.as_bool()).count();
        assert_eq!(parity_of(&bits).as_u8() as usize, ones % 2);
    }

    #[test]
    fn hamming_distance_counts_mismatches() {
        let a = bits_from_str("1010").unwrap();
        let b = bits_from_str("1001").unwrap();
        assert_eq!(hamming_distance(&a, &b).unwrap(), 2);
        assert!(hamming_distance(&a, &b[..3]).is_err());
    }
}
