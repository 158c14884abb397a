//! Channel endpoints connecting the two parties.
//!
//! The quantum path carries [`Photon`]s — single-use values that cannot be
//! cloned, so a delivered photon can be measured at most once. The sending
//! side owns the channel randomness: an in-basis bit flip with probability
//! `noise_flip_prob` is applied first, then an optional interceptor sees the
//! photon and may substitute it.
//!
//! The classical path carries validated [`ClassicalMessage`]s in FIFO order,
//! unmodified; an optional [`Wiretap`] receives a copy of every message that
//! passes in either direction.
//!
//! Each direction of a channel has one producer and one consumer; endpoints
//! may live on different threads (in-memory pairs) or in different processes
//! (socket transports in [`crate::socket`]).

use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::message::ClassicalMessage;
use crate::quantum::{decode, encode, measure, Basis, Measurement, Polarization};
use crate::rng::SessionRng;

/// A photon in flight. Deliberately neither `Clone` nor `Copy`: measuring or
/// unwrapping it consumes the value.
#[derive(Debug, PartialEq, Eq)]
pub struct Photon(Polarization);

impl Photon {
    pub fn new(polarization: Polarization) -> Photon {
        Photon(polarization)
    }

    /// Measure in `basis`, consuming the photon.
    pub fn measure(self, basis: Basis, rng: &mut SessionRng) -> Measurement {
        measure(self.0, basis, rng)
    }

    /// Give up the hidden state. Only the channel machinery (noise,
    /// interception, serialization) should ever call this.
    pub(crate) fn into_polarization(self) -> Polarization {
        self.0
    }
}

/// Something that can sit on the quantum channel and substitute photons.
pub trait Interceptor: Send {
    fn intercept(&mut self, photon: Polarization) -> Polarization;
}

/// Shared handle to an interceptor attached to a channel.
pub type SharedInterceptor = Arc<Mutex<dyn Interceptor>>;

/// Sending half of a quantum channel.
pub trait PhotonSender {
    fn send_photon(&mut self, photon: Photon) -> Result<()>;

    /// Flush any buffered photons (no-op for in-memory channels).
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    /// Photons delivered so far.
    fn delivered(&self) -> u64;
}

/// Receiving half of a quantum channel.
pub trait PhotonReceiver {
    fn recv_photon(&mut self) -> Result<Photon>;
}

/// One endpoint's view of the classical channel.
pub trait MessageLink {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()>;
    fn recv(&mut self) -> Result<ClassicalMessage>;
}

/// Copy-observer of classical traffic (the adversary's passive tap).
#[derive(Debug, Clone, Default)]
pub struct Wiretap(Arc<Mutex<Vec<ClassicalMessage>>>);

impl Wiretap {
    pub fn observe(&self, msg: &ClassicalMessage) {
        self.0.lock().expect("wiretap lock").push(msg.clone());
    }

    /// Everything observed so far, in delivery order.
    pub fn log(&self) -> Vec<ClassicalMessage> {
        self.0.lock().expect("wiretap lock").clone()
    }
}

/// Apply the channel noise model: flip the carried bit within the photon's
/// own basis with probability `flip_prob`. Consumes exactly one draw.
fn apply_noise(p: Polarization, flip_prob: f64, rng: &mut SessionRng) -> Polarization {
    if rng.chance(flip_prob) {
        encode(decode(p).flip(), p.basis())
    } else {
        p
    }
}

/// In-memory quantum channel, sender side.
pub struct MemoryQuantumTx {
    tx: mpsc::Sender<Photon>,
    noise_flip_prob: f64,
    rng: SessionRng,
    interceptor: Option<SharedInterceptor>,
    delivered: u64,
}

/// In-memory quantum channel, receiver side.
pub struct MemoryQuantumRx {
    rx: mpsc::Receiver<Photon>,
}

/// Build a connected in-memory quantum channel. `rng` must be dedicated to
/// this channel (it drives the noise draws).
pub fn memory_quantum_pair(
    noise_flip_prob: f64,
    rng: SessionRng,
    interceptor: Option<SharedInterceptor>,
) -> (MemoryQuantumTx, MemoryQuantumRx) {
    let (tx, rx) = mpsc::channel();
    (
        MemoryQuantumTx {
            tx,
            noise_flip_prob,
            rng,
            interceptor,
            delivered: 0,
        },
        MemoryQuantumRx { rx },
    )
}

impl PhotonSender for MemoryQuantumTx {
    fn send_photon(&mut self, photon: Photon) -> Result<()> {
        let mut p = apply_noise(photon.into_polarization(), self.noise_flip_prob, &mut self.rng);
        if let Some(interceptor) = &self.interceptor {
            p = interceptor.lock().expect("interceptor lock").intercept(p);
        }
        self.tx
            .send(Photon::new(p))
            .map_err(|_| Error::ChannelClosed)?;
        self.delivered += 1;
        Ok(())
    }

    fn delivered(&self) -> u64 {
        self.delivered
    }
}

impl PhotonReceiver for MemoryQuantumRx {
    fn recv_photon(&mut self) -> Result<Photon> {
        self.rx.recv().map_err(|_| Error::ChannelClosed)
    }
}

/// In-memory classical link (one end of the pair).
pub struct MemoryClassicalLink {
    tx: mpsc::Sender<ClassicalMessage>,
    rx: mpsc::Receiver<ClassicalMessage>,
    wiretap: Option<Wiretap>,
}

/// Build a connected pair of classical link ends. If a wiretap is supplied
/// it sees the traffic of both directions.
pub fn memory_classical_pair(
    wiretap: Option<Wiretap>,
) -> (MemoryClassicalLink, MemoryClassicalLink) {
    let (tx_ab, rx_ab) = mpsc::channel();
    let (tx_ba, rx_ba) = mpsc::channel();
    (
        MemoryClassicalLink {
            tx: tx_ab,
            rx: rx_ba,
            wiretap: wiretap.clone(),
        },
        MemoryClassicalLink {
            tx: tx_ba,
            rx: rx_ab,
            wiretap,
        },
    )
}

impl MessageLink for MemoryClassicalLink {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()> {
        msg.validate()?;
        if let Some(tap) = &self.wiretap {
            tap.observe(msg);
        }
        self.tx.send(msg.clone()).map_err(|_| Error::ChannelClosed)
    }

    fn recv(&mut self) -> Result<ClassicalMessage> {
        self.rx.recv().map_err(|_| Error::ChannelClosed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::Payload;

    #[test]
    fn identity_channel_delivers_unchanged() {
        let (mut tx, mut rx) = memory_quantum_pair(0.0, SessionRng::from_seed(1), None);
        tx.send_photon(Photon::new(Polarization::Deg45)).unwrap();
        let got = rx.recv_photon().unwrap();
        assert_eq!(got, Photon::new(Polarization::Deg45));
        assert_eq!(tx.delivered(), 1);
    }

    #[test]
    fn certain_noise_flips_within_basis() {
        let (mut tx, mut rx) = memory_quantum_pair(1.0, SessionRng::from_seed(1), None);
        tx.send_photon(Photon::new(Polarization::Deg0)).unwrap();
        assert_eq!(rx.recv_photon().unwrap(), Photon::new(Polarization::Deg90));
    }

    #[test]
    fn noise_rate_matches_flip_probability() {
        // 10^4 sends at 10% noise: delivered-flipped fraction within 0.01.
        let (mut tx, mut rx) = memory_quantum_pair(0.1, SessionRng::from_seed(77), None);
        let trials = 10_000;
        for _ in 0..trials {
            tx.send_photon(Photon::new(Polarization::Deg0)).unwrap();
        }
        let flipped = (0..trials)
            .filter(|_| rx.recv_photon().unwrap() == Photon::new(Polarization::Deg90))
            .count();
        let rate = flipped as f64 / trials as f64;
        assert!((rate - 0.10).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn photon_is_delivered_exactly_once() {
        let (mut tx, mut rx) = memory_quantum_pair(0.0, SessionRng::from_seed(1), None);
        tx.send_photon(Photon::new(Polarization::SpinR)).unwrap();
        drop(tx);
        let photon = rx.recv_photon().unwrap();
        // the one delivery succeeded; the value is gone after measuring
        let _m = photon.measure(Basis::Circular, &mut SessionRng::from_seed(2));
        // and the channel has nothing left to hand out again
        assert!(matches!(rx.recv_photon(), Err(Error::ChannelClosed)));
    }

    #[test]
    fn send_on_closed_channel_errors() {
        let (mut tx, rx) = memory_quantum_pair(0.0, SessionRng::from_seed(1), None);
        drop(rx);
        assert!(matches!(
            tx.send_photon(Photon::new(Polarization::Deg0)),
            Err(Error::ChannelClosed)
        ));
    }

    struct SwapToDeg135;
    impl Interceptor for SwapToDeg135 {
        fn intercept(&mut self, _photon: Polarization) -> Polarization {
            Polarization::Deg135
        }
    }

    #[test]
    fn interceptor_runs_after_noise_and_may_substitute() {
        let hook: SharedInterceptor = Arc::new(Mutex::new(SwapToDeg135));
        let (mut tx, mut rx) = memory_quantum_pair(0.0, SessionRng::from_seed(1), Some(hook));
        tx.send_photon(Photon::new(Polarization::Deg0)).unwrap();
        assert_eq!(rx.recv_photon().unwrap(), Photon::new(Polarization::Deg135));
    }

    #[test]
    fn classical_link_is_fifo_and_lossless() {
        let (mut a, mut b) = memory_classical_pair(None);
        let m1 = ClassicalMessage::new(1, Payload::Bases { bases: "RDR".into() });
        let m2 = ClassicalMessage::new(1, Payload::Done);
        a.send(&m1).unwrap();
        a.send(&m2).unwrap();
        assert_eq!(b.recv().unwrap(), m1);
        assert_eq!(b.recv().unwrap(), m2);
    }

    #[test]
    fn wiretap_sees_exactly_the_delivered_sequence() {
        let tap = Wiretap::default();
        let (mut a, mut b) = memory_classical_pair(Some(tap.clone()));
        let m1 = ClassicalMessage::new(1, Payload::Bases { bases: "RD".into() });
        let m2 = ClassicalMessage::new(
            1,
            Payload::MatchIndices {
                indices: vec![0, 1],
            },
        );
        a.send(&m1).unwrap();
        b.recv().unwrap();
        b.send(&m2).unwrap();
        a.recv().unwrap();
        assert_eq!(tap.log(), vec![m1, m2]);
    }

    #[test]
    fn malformed_message_is_refused_at_send() {
        let (mut a, _b) = memory_classical_pair(None);
        let bad = ClassicalMessage::new(
            1,
            Payload::MatchIndices {
                indices: vec![2, 1],
            },
        );
        assert!(matches!(a.send(&bad), Err(Error::InvalidMessage(_))));
    }

    #[test]
    fn recv_after_peer_drop_errors() {
        let (a, mut b) = memory_classical_pair(None);
        drop(a);
        assert!(matches!(b.recv(), Err(Error::ChannelClosed)));
    }
}
