//! The classical-channel message set: everything the two endpoints say in
//! public during a session.
//!
//! Messages are plain data with serde derives; the wire framing lives in
//! [`crate::wire`]. Payload invariants (index ordering, range shape, packed
//! bit lengths) are checked by [`ClassicalMessage::validate`], which both the
//! sending path and the frame decoder call.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::{pack_bits, unpack_bits, Bit};
use crate::error::{Error, Result};
use crate::quantum::Basis;

/// A bit string packed into bytes with an explicit bit length.
///
/// Serializes as `{"len": N, "hex": "..."}`; padding bits beyond `len` must
/// be zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBits {
    bit_len: usize,
    bytes: Vec<u8>,
}

impl PackedBits {
    pub fn from_bits(bits: &[Bit]) -> PackedBits {
        PackedBits {
            bit_len: bits.len(),
            bytes: pack_bits(bits),
        }
    }

    /// Whole bytes, `bit_len = 8 * bytes.len()`.
    pub fn from_bytes(bytes: Vec<u8>) -> PackedBits {
        PackedBits {
            bit_len: bytes.len() * 8,
            bytes,
        }
    }

    pub fn to_bits(&self) -> Vec<Bit> {
        // Construction guarantees consistency.
        unpack_bits(&self.bytes, self.bit_len).expect("packed bits are internally consistent")
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

#[derive(Serialize, Deserialize)]
struct PackedBitsRepr {
    len: usize,
    hex: String,
}

impl Serialize for PackedBits {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PackedBitsRepr {
            len: self.bit_len,
            hex: hex::encode(&self.bytes),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PackedBits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PackedBitsRepr::deserialize(deserializer)?;
        let bytes = hex::decode(&repr.hex).map_err(D::Error::custom)?;
        // unpack validates length and padding
        unpack_bits(&bytes, repr.len).map_err(D::Error::custom)?;
        Ok(PackedBits {
            bit_len: repr.len,
            bytes,
        })
    }
}

/// Why a session was abandoned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// Estimated error rate above the configured threshold.
    QberExceeded,
    /// Not enough key bits survive to continue safely.
    KeyExhausted,
    /// The underlying transport failed mid-session.
    Transport,
    /// The peer broke the message schedule.
    Protocol,
}

impl AbortReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::QberExceeded => "qber_exceeded",
            AbortReason::KeyExhausted => "key_exhausted",
            AbortReason::Transport => "transport",
            AbortReason::Protocol => "protocol",
        }
    }
}

/// Tagged payload of a public-discussion message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Payload {
    /// Emitter's preparation bases, one `R`/`D`/`C` code per photon.
    Bases { bases: String },
    /// Receiver's positions where both chose the same basis, ascending.
    MatchIndices { indices: Vec<u32> },
    /// Emitter's sampled check positions (into the sifted key, ascending)
    /// together with its own bits there, so both ends estimate the same
    /// error rate.
    CheckRequest { indices: Vec<u32>, bits: PackedBits },
    /// Receiver's bits at the requested check positions.
    CheckBits { bits: PackedBits },
    /// Parity of the working-order half-open block `[lo, hi)` on the
    /// emitter side.
    BlockParity { pass: u32, lo: u32, hi: u32, parity: Bit },
    /// Receiver's parity of the same block.
    ParityReply { pass: u32, lo: u32, hi: u32, parity: Bit },
    /// Public shuffle announcement: both sides permute with `seed`; the
    /// final announcement also says how many trailing bits to drop.
    Permute { seed: u64, drop_last: u32 },
    /// Positions (in checked-key coordinates) to delete before the final
    /// permutation, ascending.
    DiscardIndices { indices: Vec<u32> },
    Abort { reason: AbortReason },
    Done,
}

impl Payload {
    pub fn tag(&self) -> &'static str {
        match self {
            Payload::Bases { .. } => "bases",
            Payload::MatchIndices { .. } => "match_indices",
            Payload::CheckRequest { .. } => "check_request",
            Payload::CheckBits { .. } => "check_bits",
            Payload::BlockParity { .. } => "block_parity",
            Payload::ParityReply { .. } => "parity_reply",
            Payload::Permute { .. } => "permute",
            Payload::DiscardIndices { .. } => "discard_indices",
            Payload::Abort { .. } => "abort",
            Payload::Done => "done",
        }
    }
}

/// One message of the public discussion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalMessage {
    pub session: u64,
    pub msg: Payload,
}

impl ClassicalMessage {
    pub fn new(session: u64, msg: Payload) -> ClassicalMessage {
        ClassicalMessage { session, msg }
    }

    pub fn tag(&self) -> &'static str {
        self.msg.tag()
    }

    /// Check the intrinsic payload invariants (context-free; endpoints
    /// additionally check bounds against their own key lengths).
    pub fn validate(&self) -> Result<()> {
        match &self.msg {
            Payload::Bases { bases } => {
                if bases.is_empty() {
                    return Err(Error::InvalidMessage("bases must not be empty".into()));
                }
                for c in bases.chars() {
                    Basis::from_code(c)?;
                }
            }
            Payload::MatchIndices { indices } | Payload::DiscardIndices { indices } => {
                check_strictly_increasing(indices)?;
            }
            Payload::CheckRequest { indices, bits } => {
                check_strictly_increasing(indices)?;
                if indices.is_empty() {
                    return Err(Error::InvalidMessage("check set must not be empty".into()));
                }
                if bits.bit_len() != indices.len() {
                    return Err(Error::InvalidMessage(format!(
                        "check bits ({}) must match check indices ({})",
                        bits.bit_len(),
                        indices.len()
                    )));
                }
            }
            Payload::CheckBits { bits } => {
                if bits.bit_len() == 0 {
                    return Err(Error::InvalidMessage("check bits must not be empty".into()));
                }
            }
            Payload::BlockParity { lo, hi, .. } | Payload::ParityReply { lo, hi, .. } => {
                if lo >= hi {
                    return Err(Error::InvalidMessage(format!(
                        "block range [{lo}, {hi}) must be non-empty"
                    )));
                }
            }
            Payload::Permute { .. } | Payload::Abort { .. } | Payload::Done => {}
        }
        Ok(())
    }
}

fn check_strictly_increasing(indices: &[u32]) -> Result<()> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidMessage(
            "indices must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Convert the basis sequence to its wire string.
pub fn bases_to_string(bases: &[Basis]) -> String {
    bases.iter().map(|b| b.code()).collect()
}

/// Parse a wire basis string.
pub fn bases_from_string(s: &str) -> Result<Vec<Basis>> {
    s.chars().map(Basis::from_code).collect()
}
