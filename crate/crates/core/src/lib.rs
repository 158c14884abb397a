//! Deterministic BB84 quantum key distribution simulator.

pub mod adversary;
pub mod amplification;
pub mod bits;
pub mod channel;
pub mod error;
pub mod message;
pub mod protocol;
pub mod quantum;
pub mod reconciliation;
pub mod rng;
pub mod transcript;
pub mod uncertainty;
pub mod vernam;
pub mod wire;

pub use error::{Error, Result};
