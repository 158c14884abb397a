//! Error type shared across the simulator.

use thiserror::Error;

/// Errors produced by channels, codecs, protocol endpoints, and the cipher layer.
#[derive(Debug, Error)]
pub enum Error {
    /// The peer end of a channel is gone.
    #[error("channel closed")]
    ChannelClosed,

    /// A wire frame could not be decoded. `offset` is the byte position in the
    /// input at which decoding failed.
    #[error("frame decode error at offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    /// A classical message violates its payload invariants.
    #[error("invalid message: {0}")]
    InvalidMessage(String),

    /// A session configuration value is out of its documented domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An operation was called with arguments outside its contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The peer sent something the protocol schedule does not allow here.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// The socket handshake line was missing, malformed, or mismatched.
    #[error("handshake failed: {0}")]
    Handshake(String),

    /// Key material ran out (too few bits survive checking or amplification).
    #[error("key exhausted: {0}")]
    KeyExhausted(String),

    /// A one-time pad does not have enough unused bits left.
    #[error("pad exhausted: need {needed} bits, {remaining} remaining")]
    PadExhausted { needed: usize, remaining: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
