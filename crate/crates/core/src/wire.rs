//! Length-prefixed wire framing for classical messages.
//!
//! A frame is a 4-byte big-endian body length followed by the message body:
//! UTF-8 JSON with the tag and every field name as text, bit strings packed
//! into hex bytes with an explicit bit length. The body of a `Bases` message
//! carrying `k` bases is at most [`BASES_BODY_OVERHEAD`]` + k` bytes.
//!
//! Decode errors carry the byte offset at which decoding failed.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::message::ClassicalMessage;

/// Hard cap on a frame body; anything larger is refused on both sides.
pub const MAX_BODY_LEN: usize = 1 << 24; // 16 MiB

/// Maximum body bytes of a `Bases` frame beyond one byte per basis
/// (envelope, tag, field names, and a 20-digit session id).
pub const BASES_BODY_OVERHEAD: usize = 65;

/// Serialize a message body (no length prefix).
fn encode_body(msg: &ClassicalMessage) -> Result<Vec<u8>> {
    msg.validate()?;
    serde_json::to_vec(msg).map_err(|e| Error::InvalidMessage(e.to_string()))
}

/// Encode one message as a complete frame.
pub fn encode_wire(msg: &ClassicalMessage) -> Result<Vec<u8>> {
    let body = encode_body(msg)?;
    if body.len() > MAX_BODY_LEN {
        return Err(Error::InvalidMessage(format!(
            "message body of {} bytes exceeds the {} byte cap",
            body.len(),
            MAX_BODY_LEN
        )));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Decode exactly one frame from `bytes` (no trailing data allowed).
pub fn decode_wire(bytes: &[u8]) -> Result<ClassicalMessage> {
    if bytes.len() < 4 {
        return Err(Error::Decode {
            offset: bytes.len(),
            reason: "truncated frame: missing length prefix".into(),
        });
    }
    let declared = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if declared > MAX_BODY_LEN {
        return Err(Error::Decode {
            offset: 0,
            reason: format!("length overflow: declared {declared} bytes"),
        });
    }
    if bytes.len() < 4 + declared {
        return Err(Error::Decode {
            offset: bytes.len(),
            reason: format!(
                "truncated frame: declared {} body bytes, got {}",
                declared,
                bytes.len() - 4
            ),
        });
    }
    if bytes.len() > 4 + declared {
        return Err(Error::Decode {
            offset: 4 + declared,
            reason: "trailing bytes after frame".into(),
        });
    }
    decode_body(&bytes[4..])
}

fn decode_body(body: &[u8]) -> Result<ClassicalMessage> {
    let msg: ClassicalMessage = serde_json::from_slice(body).map_err(|e| Error::Decode {
        // bodies are single-line JSON, so the column locates the byte
        offset: 4 + e.column().saturating_sub(1),
        reason: e.to_string(),
    })?;
    msg.validate()?;
    Ok(msg)
}

/// Write one frame to a stream.
pub fn write_frame(w: &mut impl Write, msg: &ClassicalMessage) -> Result<()> {
    let frame = encode_wire(msg)?;
    w.write_all(&frame)?;
    Ok(())
}

/// Read one frame from a stream. An EOF before the first prefix byte maps to
/// [`Error::ChannelClosed`]; an EOF mid-frame is a decode error.
pub fn read_frame(r: &mut impl Read) -> Result<ClassicalMessage> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut prefix[filled..])? {
            0 if filled == 0 => return Err(Error::ChannelClosed),
            0 => {
                return Err(Error::Decode {
                    offset: filled,
                    reason: "truncated frame: missing length prefix".into(),
                })
            }
            n => filled += n,
        }
    }
    let declared = u32::from_be_bytes(prefix) as usize;
    if declared > MAX_BODY_LEN {
        return Err(Error::Decode {
            offset: 0,
            reason: format!("length overflow: declared {declared} bytes"),
        });
    }
    let mut body = vec![0u8; declared];
    r.read_exact(&mut body).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Decode {
                offset: 4,
                reason: format!("truncated frame: declared {declared} body bytes"),
            }
        } else {
            Error::Io(e)
        }
    })?;
    decode_body(&body)
}
