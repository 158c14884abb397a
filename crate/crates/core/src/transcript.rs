//! Stable JSON-lines transcript export.
//!
//! One line per classical message, in protocol order, followed by one digest
//! line per key stage the exporting endpoint reached:
//!
//! ```text
//! {"type":"message","seq":0,"from":"emitter","msg":{...}}
//! ...
//! {"type":"key_digest","role":"emitter","stage":"raw","bits":4096,"sha256":"..."}
//! ```
//!
//! The format carries no timestamps or addresses, so two seeded runs of the
//! same session — in process or across sockets — export byte-identical
//! files. Digests are SHA-256 over the bit length (8-byte big-endian)
//! followed by the MSB-first packed bits.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bits::pack_bits;
use crate::error::Result;
use crate::message::ClassicalMessage;
use crate::protocol::{EndpointReport, KeyMaterial};

/// Digest of a key's bits: SHA-256 of `bit_len (u64 BE) || packed bits`.
pub fn key_digest(key: &KeyMaterial) -> String {
    let mut hasher = Sha256::new();
    hasher.update((key.len() as u64).to_be_bytes());
    hasher.update(pack_bits(key.bits()));
    hex::encode(hasher.finalize())
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line<'a> {
    Message {
        seq: usize,
        from: &'a str,
        msg: &'a ClassicalMessage,
    },
    KeyDigest {
        role: &'a str,
        stage: &'a str,
        bits: usize,
        sha256: String,
    },
}

/// Export one endpoint's view as JSON lines.
pub fn export_jsonl(report: &EndpointReport) -> String {
    let mut out = String::new();
    for (seq, entry) in report.transcript.iter().enumerate() {
        let line = Line::Message {
            seq,
            from: entry.from.as_str(),
            msg: &entry.message,
        };
        out.push_str(&serde_json::to_string(&line).expect("transcript lines serialize"));
        out.push('\n');
    }
    for key in &report.stages {
        let line = Line::KeyDigest {
            role: report.role.as_str(),
            stage: key.stage().as_str(),
            bits: key.len(),
            sha256: key_digest(key),
        };
        out.push_str(&serde_json::to_string(&line).expect("transcript lines serialize"));
        out.push('\n');
    }
    out
}

/// Write [`export_jsonl`] to a stream.
pub fn write_jsonl(w: &mut impl Write, report: &EndpointReport) -> Result<()> {
    w.write_all(export_jsonl(report).as_bytes())?;
    Ok(())
}
