//! One-time-pad cipher over exact bit lengths, plus a brute-force cost model.
//!
//! The pad is consumed strictly forward: every encryption or decryption takes
//! the next unused segment and the offset never rewinds, so no key bit can be
//! used twice. Ciphertext length always equals plaintext length.

use num_bigint::BigUint;

use crate::bits::{pack_bits, unpack_bits, Bit};
use crate::error::{Error, Result};

/// Bytes plus an explicit bit length; the cipher operates on exactly
/// `bit_len` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPayload {
    bits: Vec<Bit>,
}

impl BitPayload {
    pub fn from_bits(bits: Vec<Bit>) -> BitPayload {
        BitPayload { bits }
    }

    pub fn from_bytes(bytes: &[u8]) -> BitPayload {
        BitPayload {
            bits: unpack_bits(bytes, bytes.len() * 8).expect("whole bytes always unpack"),
        }
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn bit_len(&self) -> usize {
        self.bits.len()
    }

    /// Packed bytes (zero-padded to the next whole byte).
    pub fn to_bytes(&self) -> Vec<u8> {
        pack_bits(&self.bits)
    }
}

/// Message in the clear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plaintext(pub BitPayload);

/// Encrypted message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext(pub BitPayload);

impl Plaintext {
    pub fn from_bytes(bytes: &[u8]) -> Plaintext {
        Plaintext(BitPayload::from_bytes(bytes))
    }
}

/// A one-time pad with a forward-only consumption offset.
#[derive(Debug)]
pub struct PadState {
    bits: Vec<Bit>,
    consumed: usize,
}

impl PadState {
    pub fn new(bits: Vec<Bit>) -> PadState {
        PadState { bits, consumed: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.consumed
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Take the next `n` pad bits, advancing the offset. Refuses rather than
    /// reuse: once bits are out, they are gone.
    fn take(&mut self, n: usize) -> Result<&[Bit]> {
        if n > self.remaining() {
            return Err(Error::PadExhausted {
                needed: n,
                remaining: self.remaining(),
            });
        }
        let start = self.consumed;
        self.consumed += n;
        Ok(&self.bits[start..self.consumed])
    }
}

fn xor_with_pad(bits: &[Bit], pad: &mut PadState) -> Result<Vec<Bit>> {
    let segment = pad.take(bits.len())?;
    Ok(bits.iter().zip(segment).map(|(&m, &k)| m ^ k).collect())
}

/// XOR the plaintext with the next pad segment of equal bit length.
pub fn otp_encrypt(x: &Plaintext, pad: &mut PadState) -> Result<Ciphertext> {
    Ok(Ciphertext(BitPayload::from_bits(xor_with_pad(
        x.0.bits(),
        pad,
    )?)))
}

/// Inverse of [`otp_encrypt`]: XOR with the same-length pad segment.
pub fn otp_decrypt(y: &Ciphertext, pad: &mut PadState) -> Result<Plaintext> {
    Ok(Plaintext(BitPayload::from_bits(xor_with_pad(
        y.0.bits(),
        pad,
    )?)))
}

pub const MICROS_PER_SECOND: f64 = 1e6;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Cost of brute-forcing a `key_bits`-bit key at a given trial rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceEstimate {
    pub key_bits: u32,
    /// `2^key_bits`, exact.
    pub keyspace: BigUint,
    pub decryptions_per_micro: f64,
    /// Expected time to success: half the keyspace at the given rate.
    pub expected_micros: f64,
}

impl BruteForceEstimate {
    pub fn expected_seconds(&self) -> f64 {
        self.expected_micros / MICROS_PER_SECOND
    }

    pub fn expected_days(&self) -> f64 {
        self.expected_seconds() / SECONDS_PER_DAY
    }

    pub fn expected_years(&self) -> f64 {
        self.expected_days() / DAYS_PER_YEAR
    }
}

/// Keyspace size and expected search time for exhaustive key search.
///
/// The expected time is half the keyspace divided by the rate, in
/// microseconds. The keyspace is exact (arbitrary precision); times are
/// `f64`, which is plenty up to ~1000-bit keys.
pub fn brute_force_estimate(key_bits: u32, decryptions_per_micro: f64) -> Result<BruteForceEstimate> {
    if key_bits == 0 {
        return Err(Error::InvalidInput("key_bits must be at least 1".into()));
    }
    if !(decryptions_per_micro > 0.0) {
        return Err(Error::InvalidInput("rate must be positive".into()));
    }
    let keyspace = BigUint::from(1u8) << key_bits;
    let expected_micros = 2f64.powi(key_bits as i32 - 1) / decryptions_per_micro;
    Ok(BruteForceEstimate {
        key_bits,
        keyspace,
        decryptions_per_micro,
        expected_micros,
    })
}

/// `(mantissa, exponent)` of a big integer in normalized scientific notation,
/// e.g. `2^64 -> (1.844..., 19)`.
pub fn scientific_parts(value: &BigUint) -> (f64, i64) {
    let digits = value.to_string();
    let exponent = digits.len() as i64 - 1;
    let mut mantissa_str = String::with_capacity(18);
    mantissa_str.push_str(&digits[..1]);
    mantissa_str.push('.');
    mantissa_str.push_str(&digits[1..digits.len().min(17)]);
    let mantissa: f64 = mantissa_str.parse().expect("digits parse as f64");
    (mantissa, exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits_from_str;

    fn pad_from(s: &str) -> PadState {
        PadState::new(bits_from_str(s).unwrap())
    }

    #[test]
    fn encrypt_is_xor_with_pad_segment() {
        let mut pad = pad_from("0110");
        let x = Plaintext(BitPayload::from_bits(bits_from_str("1010").unwrap()));
        let y = otp_encrypt(&x, &mut pad).unwrap();
        assert_eq!(y.0.bits(), bits_from_str("1100").unwrap());
    }

    #[test]
    fn zero_plaintext_emits_the_pad_itself() {
        let mut pad = pad_from("010011");
        let x = Plaintext(BitPayload::from_bits(bits_from_str("000000").unwrap()));
        let y = otp_encrypt(&x, &mut pad).unwrap();
        assert_eq!(y.0.bits(), bits_from_str("010011").unwrap());
    }

    #[test]
    fn decrypt_mirrors_encrypt() {
        let mut pad = pad_from("0110");
        let y = Ciphertext(BitPayload::from_bits(bits_from_str("1100").unwrap()));
        let x = otp_decrypt(&y, &mut pad).unwrap();
        assert_eq!(x.0.bits(), bits_from_str("1010").unwrap());
    }

    #[test]
    fn pad_never_rewinds_and_refuses_reuse() {
        let mut pad = pad_from("10101010");
        let x = Plaintext(BitPayload::from_bits(bits_from_str("11111").unwrap()));
        otp_encrypt(&x, &mut pad).unwrap();
        assert_eq!(pad.consumed(), 5);
        assert_eq!(pad.remaining(), 3);
        // a second message needing 5 bits must be refused, not recycled
        match otp_encrypt(&x, &mut pad) {
            Err(Error::PadExhausted { needed, remaining }) => {
                assert_eq!((needed, remaining), (5, 3));
            }
            other => panic!("expected pad exhaustion, got {other:?}"),
        }
        // the failed attempt consumed nothing
        assert_eq!(pad.remaining(), 3);
    }

    #[test]
    fn estimator_smallest_case() {
        let e = brute_force_estimate(1, 1.0).unwrap();
        assert_eq!(e.keyspace, BigUint::from(2u8));
        assert_eq!(e.expected_micros, 1.0);
    }

    #[test]
    fn estimator_rejects_bad_input() {
        assert!(brute_force_estimate(0, 1.0).is_err());
        assert!(brute_force_estimate(8, 0.0).is_err());
        assert!(brute_force_estimate(8, -2.0).is_err());
    }

    #[test]
    fn sixty_four_bit_row() {
        let e = brute_force_estimate(64, 1.0).unwrap();
        let (m, exp) = scientific_parts(&e.keyspace);
        assert_eq!(exp, 19);
        assert!((m - 1.8446744).abs() < 1e-6);
        let years = e.expected_years();
        assert!((years - 2.9e5).abs() / 2.9e5 < 0.05, "{years}");

        let fast = brute_force_estimate(64, 1e6).unwrap();
        let days = fast.expected_days();
        assert!((days - 106.0).abs() / 106.0 < 0.05, "{days}");
    }

    #[test]
    fn scientific_parts_of_powers() {
        let (m, e) = scientific_parts(&(BigUint::from(1u8) << 128u32));
        assert_eq!(e, 38);
        assert!((m - 3.4028236).abs() < 1e-6);
    }
}
