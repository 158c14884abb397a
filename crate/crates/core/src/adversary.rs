//! Intercept-resend eavesdropper and her knowledge ledger.
//!
//! Eve sits on the quantum channel. Per photon she flips a Bernoulli coin
//! with her intercept probability; on interception she measures in a uniform
//! basis (over the session's enabled bases), logs the outcome, and forwards
//! the collapsed photon. She also reads every public message through the
//! channel wiretap. After the bases are announced, an intercepted sifted
//! position is knowledge exactly when her basis matched the emitter's.

use std::collections::BTreeMap;

use crate::bits::Bit;
use crate::channel::Interceptor;
use crate::error::{Error, Result};
use crate::message::{bases_from_string, ClassicalMessage, Payload};
use crate::quantum::{measure, Basis, BasesMode, Polarization};
use crate::rng::SessionRng;

/// One intercepted photon: position on the wire, Eve's basis, her outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterceptRecord {
    pub index: usize,
    pub basis: Basis,
    pub outcome: Bit,
}

/// The adversary's full state across a session.
#[derive(Debug)]
pub struct Eavesdropper {
    intercept_prob: f64,
    bases_mode: BasesMode,
    rng: SessionRng,
    seen: usize,
    quantum_log: Vec<InterceptRecord>,
    classical_log: Vec<ClassicalMessage>,
}

impl Eavesdropper {
    pub fn new(intercept_prob: f64, bases_mode: BasesMode, seed: u64) -> Eavesdropper {
        Eavesdropper {
            intercept_prob,
            bases_mode,
            rng: SessionRng::from_seed(seed),
            seen: 0,
            quantum_log: Vec::new(),
            classical_log: Vec::new(),
        }
    }

    /// Handle one photon in flight. Pass-through with probability
    /// `1 - intercept_prob`; otherwise measure-and-resend.
    pub fn intercept(&mut self, photon: Polarization) -> Polarization {
        let index = self.seen;
        self.seen += 1;
        if !self.rng.chance(self.intercept_prob) {
            return photon;
        }
        let basis = self.bases_mode.pick(&mut self.rng);
        let m = measure(photon, basis, &mut self.rng);
        self.quantum_log.push(InterceptRecord {
            index,
            basis,
            outcome: m.outcome,
        });
        m.collapsed
    }

    /// Record one public message (fed from the wiretap or the proxy).
    pub fn observe_classical(&mut self, msg: &ClassicalMessage) {
        self.classical_log.push(msg.clone());
    }

    pub fn quantum_log(&self) -> &[InterceptRecord] {
        &self.quantum_log
    }

    pub fn classical_log(&self) -> &[ClassicalMessage] {
        &self.classical_log
    }

    /// Photons that passed through Eve so far.
    pub fn photons_seen(&self) -> usize {
        self.seen
    }

    /// What Eve knows, given the emitter's announced bases and the sifted
    /// positions.
    pub fn knowledge(
        &self,
        announced_bases: &[Basis],
        kept_indices: &[usize],
    ) -> Result<AdversaryKnowledge> {
        let mut known = BTreeMap::new();
        for record in &self.quantum_log {
            let Some(&basis) = announced_bases.get(record.index) else {
                return Err(Error::InvalidInput(format!(
                    "intercept index {} beyond announced bases ({})",
                    record.index,
                    announced_bases.len()
                )));
            };
            if basis == record.basis && kept_indices.binary_search(&record.index).is_ok() {
                known.insert(record.index, record.outcome);
            }
        }
        let sifted_len = kept_indices.len();
        let known_fraction = if sifted_len == 0 {
            0.0
        } else {
            known.len() as f64 / sifted_len as f64
        };
        Ok(AdversaryKnowledge {
            known,
            sifted_len,
            known_fraction,
        })
    }

    /// Like [`knowledge`](Self::knowledge), but pulls the announced bases and
    /// match positions out of the classical log. Fails if the public
    /// discussion has not reached that point.
    pub fn knowledge_from_log(&self) -> Result<AdversaryKnowledge> {
        let mut bases = None;
        let mut kept = None;
        for msg in &self.classical_log {
            match &msg.msg {
                Payload::Bases { bases: s } => bases = Some(bases_from_string(s)?),
                Payload::MatchIndices { indices } => {
                    kept = Some(indices.iter().map(|&i| i as usize).collect::<Vec<_>>())
                }
                _ => {}
            }
        }
        let bases = bases.ok_or_else(|| {
            Error::InvalidInput("bases not announced yet: no knowledge to evaluate".into())
        })?;
        let kept = kept.ok_or_else(|| {
            Error::InvalidInput("match positions not announced yet: no knowledge to evaluate".into())
        })?;
        self.knowledge(&bases, &kept)
    }
}

impl Interceptor for Eavesdropper {
    fn intercept(&mut self, photon: Polarization) -> Polarization {
        Eavesdropper::intercept(self, photon)
    }
}

/// Eve's per-index beliefs after the public discussion.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryKnowledge {
    /// Raw-position -> bit for every position Eve counts as known.
    pub known: BTreeMap<usize, Bit>,
    /// Length of the sifted key her fraction is measured against.
    pub sifted_len: usize,
    pub known_fraction: f64,
}

impl AdversaryKnowledge {
    pub fn known_bits(&self) -> usize {
        self.known.len()
    }
}
