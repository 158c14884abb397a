//! Emitter and Receiver state machines for the key-distribution session.
//!
//! The emitter drives the public discussion on a fixed schedule: `Bases`,
//! then the receiver's `MatchIndices`, then `CheckRequest`/`CheckBits`,
//! reconciliation, the final `Permute` and `DiscardIndices` announcements,
//! and `Done`. Either side may say `Abort` instead of its next message.
//! Because the schedule is strictly alternating, both endpoints observe the
//! identical message order, and a seeded session is reproducible message for
//! message over any transport.
//!
//! Emitter draw order (seed `seed_emitter`): `n` key bits, `n` bases, the
//! check-position sample, one shuffle seed per inter-pass permute, one final
//! permutation seed. Receiver draw order (seed `seed_receiver`): per photon,
//! one basis pick and, on basis mismatch, one measurement coin.

use std::sync::{Arc, Mutex};
use std::thread;

use crate::adversary::Eavesdropper;
use crate::amplification::{amplify, AmplificationParams, DEFAULT_SECURITY_MARGIN};
use crate::bits::{Bit, hamming_distance};
use crate::channel::{
    memory_classical_pair, memory_quantum_pair, MessageLink, Photon, PhotonReceiver, PhotonSender,
    SharedInterceptor, Wiretap,
};
use crate::error::{Error, Result};
use crate::message::{
    bases_from_string, bases_to_string, AbortReason, ClassicalMessage, PackedBits, Payload,
};
use crate::quantum::{encode, Basis, BasesMode, Polarization};
use crate::reconciliation::{
    reconcile_driver, reconcile_follower, LeakageLedger, ReconciliationParams,
};
use crate::rng::SessionRng;

pub const DEFAULT_RAW_BITS: usize = 4096;
pub const DEFAULT_CHECK_FRACTION: f64 = 0.25;
pub const DEFAULT_QBER_THRESHOLD: f64 = 0.11;

/// Every knob of a session. Both endpoints must hold identical values.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// Shared session identifier (carried in every message and in the
    /// socket handshake).
    pub session_id: u64,
    /// Number of photons the emitter prepares (`n`).
    pub raw_bits: usize,
    pub bases_mode: BasesMode,
    /// Fraction of the sifted key sacrificed for error estimation.
    pub check_fraction: f64,
    /// Exact check-bit count; overrides `check_fraction` when set.
    pub check_count: Option<usize>,
    /// Abort when the estimated error rate exceeds this.
    pub qber_threshold: f64,
    /// Channel noise: in-basis flip probability per photon.
    pub noise_flip_prob: f64,
    /// Adversary interception probability per photon.
    pub eve_intercept_prob: f64,
    pub seed_emitter: u64,
    pub seed_receiver: u64,
    pub seed_eve: u64,
    pub seed_channel: u64,
    pub reconciliation: ReconciliationParams,
    /// Extra amplification margin on top of the disclosed-parity count.
    pub security_margin: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            session_id: 1,
            raw_bits: DEFAULT_RAW_BITS,
            bases_mode: BasesMode::TwoBasis,
            check_fraction: DEFAULT_CHECK_FRACTION,
            check_count: None,
            qber_threshold: DEFAULT_QBER_THRESHOLD,
            noise_flip_prob: 0.0,
            eve_intercept_prob: 0.0,
            seed_emitter: 1,
            seed_receiver: 2,
            seed_eve: 3,
            seed_channel: 4,
            reconciliation: ReconciliationParams::default(),
            security_margin: DEFAULT_SECURITY_MARGIN,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.raw_bits < 16 {
            return Err(Error::InvalidConfig(format!(
                "raw_bits must be at least 16, got {}",
                self.raw_bits
            )));
        }
        if self.raw_bits > u32::MAX as usize / 2 {
            return Err(Error::InvalidConfig("raw_bits too large".into()));
        }
        if !(self.check_fraction > 0.0 && self.check_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "check_fraction must lie in (0, 1), got {}",
                self.check_fraction
            )));
        }
        if self.check_count == Some(0) {
            return Err(Error::InvalidConfig("check_count must be positive".into()));
        }
        for (name, v) in [
            ("qber_threshold", self.qber_threshold),
            ("noise_flip_prob", self.noise_flip_prob),
            ("eve_intercept_prob", self.eve_intercept_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        self.reconciliation.validate()
    }
}

/// Refinement stage of a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KeyStage {
    Raw,
    Sifted,
    Checked,
    Reconciled,
    Final,
}

impl KeyStage {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyStage::Raw => "raw",
            KeyStage::Sifted => "sifted",
            KeyStage::Checked => "checked",
            KeyStage::Reconciled => "reconciled",
            KeyStage::Final => "final",
        }
    }
}

/// A bit string with its refinement stage and a leakage counter.
///
/// Stages only move forward. The leakage counter saturates at the key length
/// (the exact disclosure count lives in the [`LeakageLedger`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    bits: Vec<Bit>,
    stage: KeyStage,
    leaked_bits: usize,
}

impl KeyMaterial {
    pub fn new(bits: Vec<Bit>, stage: KeyStage, leaked_bits: usize) -> KeyMaterial {
        let leaked = leaked_bits.min(bits.len());
        KeyMaterial {
            bits,
            stage,
            leaked_bits: leaked,
        }
    }

    pub fn raw(bits: Vec<Bit>) -> KeyMaterial {
        KeyMaterial::new(bits, KeyStage::Raw, 0)
    }

    /// Produce the next refinement. Fails if `next` does not move forward.
    pub fn advance(&self, next: KeyStage, bits: Vec<Bit>, leaked_bits: usize) -> Result<KeyMaterial> {
        if next <= self.stage {
            return Err(Error::InvalidInput(format!(
                "key stage may not go {} -> {}",
                self.stage.as_str(),
                next.as_str()
            )));
        }
        Ok(KeyMaterial::new(bits, next, leaked_bits))
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn stage(&self) -> KeyStage {
        self.stage
    }

    pub fn leaked_bits(&self) -> usize {
        self.leaked_bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Which endpoint a message or report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Emitter,
    Receiver,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Emitter => Role::Receiver,
            Role::Receiver => Role::Emitter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Emitter => "emitter",
            Role::Receiver => "receiver",
        }
    }
}

/// One public message, tagged with the side that said it.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub from: Role,
    pub message: ClassicalMessage,
}

/// Message link wrapper that stamps the session id, records a transcript,
/// and rejects cross-session traffic.
pub(crate) struct LoggedLink<'a, L: MessageLink> {
    inner: &'a mut L,
    session: u64,
    role: Role,
    entries: Vec<TranscriptEntry>,
}

impl<'a, L: MessageLink> LoggedLink<'a, L> {
    pub(crate) fn new(inner: &'a mut L, session: u64, role: Role) -> Self {
        LoggedLink {
            inner,
            session,
            role,
            entries: Vec::new(),
        }
    }

    pub(crate) fn send_payload(&mut self, payload: Payload) -> Result<()> {
        let msg = ClassicalMessage::new(self.session, payload);
        self.inner.send(&msg)?;
        self.entries.push(TranscriptEntry {
            from: self.role,
            message: msg,
        });
        Ok(())
    }

    pub(crate) fn recv_msg(&mut self) -> Result<ClassicalMessage> {
        let msg = self.inner.recv()?;
        if msg.session != self.session {
            return Err(Error::Protocol(format!(
                "session mismatch: ours {}, theirs {}",
                self.session, msg.session
            )));
        }
        self.entries.push(TranscriptEntry {
            from: self.role.peer(),
            message: msg.clone(),
        });
        Ok(msg)
    }

    pub(crate) fn into_entries(self) -> Vec<TranscriptEntry> {
        self.entries
    }
}

/// What one endpoint knows when its session ends.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointReport {
    pub role: Role,
    /// Key snapshots in stage order (raw first; final last when reached).
    pub stages: Vec<KeyMaterial>,
    /// This endpoint's own basis choices, per photon.
    pub bases: Vec<Basis>,
    /// Positions kept by sifting (raw coordinates).
    pub kept_indices: Vec<usize>,
    pub qber_estimate: Option<f64>,
    pub detected: bool,
    pub abort: Option<AbortReason>,
    pub ledger: LeakageLedger,
    pub transcript: Vec<TranscriptEntry>,
}

impl EndpointReport {
    pub fn stage(&self, stage: KeyStage) -> Option<&KeyMaterial> {
        self.stages.iter().find(|k| k.stage() == stage)
    }

    /// Latest key snapshot (always present: raw at minimum).
    pub fn key(&self) -> &KeyMaterial {
        self.stages.last().expect("raw stage always recorded")
    }

    pub fn final_key(&self) -> Option<&KeyMaterial> {
        self.stage(KeyStage::Final)
    }

    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// Classical messages in protocol order (direction tags stripped).
    pub fn messages(&self) -> Vec<ClassicalMessage> {
        self.transcript.iter().map(|e| e.message.clone()).collect()
    }
}

/// The emitter's preparation step: `n` random bits, `n` random bases, and
/// the photon for each pair.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bits: Vec<Bit>,
    pub bases: Vec<Basis>,
    pub photons: Vec<Polarization>,
}

/// Draw `n` bits, then `n` bases, then encode (in that order).
pub fn emitter_prepare(n: usize, mode: BasesMode, rng: &mut SessionRng) -> Prepared {
    let bits: Vec<Bit> = (0..n).map(|_| rng.bit()).collect();
    let bases: Vec<Basis> = (0..n).map(|_| mode.pick(rng)).collect();
    let photons = bits
        .iter()
        .zip(&bases)
        .map(|(&b, &basis)| encode(b, basis))
        .collect();
    Prepared { bits, bases, photons }
}

/// Measure a photon stream: per photon one uniform basis pick, then the
/// measurement itself.
pub fn receiver_measure(
    photons: impl IntoIterator<Item = Photon>,
    mode: BasesMode,
    rng: &mut SessionRng,
) -> (Vec<Basis>, Vec<Bit>) {
    let mut bases = Vec::new();
    let mut bits = Vec::new();
    for photon in photons {
        let basis = mode.pick(rng);
        let m = photon.measure(basis, rng);
        bases.push(basis);
        bits.push(m.outcome);
    }
    (bases, bits)
}

/// Result of dropping all positions where the two basis strings differ.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftResult {
    /// Kept raw positions, ascending.
    pub kept: Vec<usize>,
    pub emitter: Vec<Bit>,
    pub receiver: Vec<Bit>,
}

/// Keep exactly the positions where both sides chose the same basis.
pub fn sift(
    emitter_bases: &[Basis],
    receiver_bases: &[Basis],
    emitter_bits: &[Bit],
    receiver_bits: &[Bit],
) -> Result<SiftResult> {
    let n = emitter_bases.len();
    if receiver_bases.len() != n || emitter_bits.len() != n || receiver_bits.len() != n {
        return Err(Error::InvalidInput(
            "sift inputs must all have the same length".into(),
        ));
    }
    let kept: Vec<usize> = (0..n)
        .filter(|&i| emitter_bases[i] == receiver_bases[i])
        .collect();
    Ok(SiftResult {
        emitter: kept.iter().map(|&i| emitter_bits[i]).collect(),
        receiver: kept.iter().map(|&i| receiver_bits[i]).collect(),
        kept,
    })
}

/// Sample check positions: a uniform sorted subset of size
/// `round(check_fraction * sifted_len)` (floored at one). Fails with
/// [`Error::KeyExhausted`] when no bits would remain afterwards.
pub fn sample_check_bits(
    sifted_len: usize,
    check_fraction: f64,
    rng: &mut SessionRng,
) -> Result<Vec<usize>> {
    let count = (check_fraction * sifted_len as f64).round() as usize;
    sample_check_count(sifted_len, count.max(1), rng)
}

/// Sample an exact number of check positions.
pub fn sample_check_count(
    sifted_len: usize,
    count: usize,
    rng: &mut SessionRng,
) -> Result<Vec<usize>> {
    if sifted_len < 2 || count >= sifted_len {
        return Err(Error::KeyExhausted(format!(
            "checking {count} of {sifted_len} sifted bits would leave no key"
        )));
    }
    Ok(rng.sample_indices(sifted_len, count))
}

/// Fraction of disagreeing positions between two equal-length check strings.
pub fn estimate_qber(emitter_check: &[Bit], receiver_check: &[Bit]) -> Result<f64> {
    if emitter_check.is_empty() {
        return Err(Error::InvalidInput("empty check set".into()));
    }
    let mismatches = hamming_distance(emitter_check, receiver_check)?;
    Ok(mismatches as f64 / emitter_check.len() as f64)
}

fn remove_positions(bits: &[Bit], sorted_positions: &[usize]) -> Vec<Bit> {
    let mut out = Vec::with_capacity(bits.len() - sorted_positions.len());
    let mut skip = sorted_positions.iter().peekable();
    for (i, &b) in bits.iter().enumerate() {
        if skip.peek() == Some(&&i) {
            skip.next();
        } else {
            out.push(b);
        }
    }
    out
}

fn to_usize_indices(indices: &[u32], bound: usize) -> Result<Vec<usize>> {
    let out: Vec<usize> = indices.iter().map(|&i| i as usize).collect();
    if let Some(&bad) = out.iter().find(|&&i| i >= bound) {
        return Err(Error::Protocol(format!(
            "index {bad} out of bounds ({bound})"
        )));
    }
    Ok(out)
}

fn unexpected(expected: &str, got: &ClassicalMessage) -> Error {
    Error::Protocol(format!("expected {expected}, got {}", got.tag()))
}

struct EndpointState {
    cfg: SessionConfig,
    stages: Vec<KeyMaterial>,
    bases: Vec<Basis>,
    kept: Vec<usize>,
    qber: Option<f64>,
    detected: bool,
    abort: Option<AbortReason>,
    ledger: LeakageLedger,
}

impl EndpointState {
    fn new(cfg: &SessionConfig) -> EndpointState {
        EndpointState {
            cfg: cfg.clone(),
            stages: Vec::new(),
            bases: Vec::new(),
            kept: Vec::new(),
            qber: None,
            detected: false,
            abort: None,
            ledger: LeakageLedger::default(),
        }
    }

    fn push_stage(&mut self, stage: KeyStage, bits: Vec<Bit>, leaked: usize) -> Result<()> {
        let next = match self.stages.last() {
            Some(prev) => prev.advance(stage, bits, leaked)?,
            None => KeyMaterial::new(bits, stage, leaked),
        };
        self.stages.push(next);
        Ok(())
    }

    fn note_peer_abort(&mut self, reason: AbortReason) {
        self.detected = reason == AbortReason::QberExceeded;
        self.abort = Some(reason);
    }

    fn into_report(self, role: Role, transcript: Vec<TranscriptEntry>) -> EndpointReport {
        EndpointReport {
            role,
            stages: self.stages,
            bases: self.bases,
            kept_indices: self.kept,
            qber_estimate: self.qber,
            detected: self.detected,
            abort: self.abort,
            ledger: self.ledger,
            transcript,
        }
    }

    /// Number of check bits for a sifted key of `len` bits.
    fn check_count(&self, len: usize) -> usize {
        match self.cfg.check_count {
            Some(c) => c,
            None => ((self.cfg.check_fraction * len as f64).round() as usize).max(1),
        }
    }
}

/// Run the emitter endpoint over the given transports. Transport failures
/// come back as a report aborted with reason `transport`, not as `Err`.
pub fn run_emitter(
    cfg: &SessionConfig,
    mut photons: impl PhotonSender,
    mut link: impl MessageLink,
) -> Result<EndpointReport> {
    cfg.validate()?;
    let mut logged = LoggedLink::new(&mut link, cfg.session_id, Role::Emitter);
    let mut state = EndpointState::new(cfg);
    match emitter_phases(&mut state, &mut photons, &mut logged) {
        Ok(()) => {}
        Err(e) if e.is_transport() => state.abort = Some(AbortReason::Transport),
        Err(e) => return Err(e),
    }
    Ok(state.into_report(Role::Emitter, logged.into_entries()))
}

fn emitter_phases(
    state: &mut EndpointState,
    photons: &mut impl PhotonSender,
    link: &mut LoggedLink<'_, impl MessageLink>,
) -> Result<()> {
    let cfg = state.cfg.clone();
    let mut rng = SessionRng::from_seed(cfg.seed_emitter);

    // Steps 1-4: prepare and transmit the photon sequence.
    let prepared = emitter_prepare(cfg.raw_bits, cfg.bases_mode, &mut rng);
    state.bases = prepared.bases.clone();
    state.push_stage(KeyStage::Raw, prepared.bits.clone(), 0)?;
    for &p in &prepared.photons {
        photons.send_photon(Photon::new(p))?;
    }
    photons.flush()?;

    // Step 7: announce bases, learn which positions survived.
    link.send_payload(Payload::Bases {
        bases: bases_to_string(&prepared.bases),
    })?;
    let reply = link.recv_msg()?;
    let kept = match &reply.msg {
        Payload::MatchIndices { indices } => to_usize_indices(indices, cfg.raw_bits)?,
        Payload::Abort { reason } => {
            state.note_peer_abort(*reason);
            return Ok(());
        }
        _ => return Err(unexpected("match_indices", &reply)),
    };
    let sifted: Vec<Bit> = kept.iter().map(|&i| prepared.bits[i]).collect();
    state.kept = kept;
    state.push_stage(KeyStage::Sifted, sifted.clone(), 0)?;

    // Error estimation: sample check positions, disclose our bits there.
    let check_idx = match sample_check_count(sifted.len(), state.check_count(sifted.len()), &mut rng)
    {
        Ok(idx) => idx,
        Err(Error::KeyExhausted(_)) => {
            link.send_payload(Payload::Abort {
                reason: AbortReason::KeyExhausted,
            })?;
            state.abort = Some(AbortReason::KeyExhausted);
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let own_check: Vec<Bit> = check_idx.iter().map(|&i| sifted[i]).collect();
    link.send_payload(Payload::CheckRequest {
        indices: check_idx.iter().map(|&i| i as u32).collect(),
        bits: PackedBits::from_bits(&own_check),
    })?;
    let reply = link.recv_msg()?;
    let peer_check = match &reply.msg {
        Payload::CheckBits { bits } if bits.bit_len() == own_check.len() => bits.to_bits(),
        Payload::CheckBits { bits } => {
            return Err(Error::Protocol(format!(
                "check_bits length {} does not match request {}",
                bits.bit_len(),
                own_check.len()
            )))
        }
        Payload::Abort { reason } => {
            state.note_peer_abort(*reason);
            return Ok(());
        }
        _ => return Err(unexpected("check_bits", &reply)),
    };
    let qber = estimate_qber(&own_check, &peer_check)?;
    state.qber = Some(qber);
    let checked = remove_positions(&sifted, &check_idx);
    state.push_stage(KeyStage::Checked, checked.clone(), 0)?;

    // Detection decision.
    if qber > cfg.qber_threshold {
        state.detected = true;
        link.send_payload(Payload::Abort {
            reason: AbortReason::QberExceeded,
        })?;
        state.abort = Some(AbortReason::QberExceeded);
        return Ok(());
    }

    // Reconciliation: our key is the reference.
    let ledger = reconcile_driver(&checked, &cfg.reconciliation, qber, link, &mut rng)?;
    state.ledger = ledger.clone();
    state.push_stage(KeyStage::Reconciled, checked.clone(), ledger.disclosed_parities)?;

    // Amplification: refuse before announcing if nothing would remain.
    let drop_last = ledger.disclosed_parities + cfg.security_margin;
    let kept_len = checked.len() - ledger.discarded_positions.len();
    if kept_len <= drop_last {
        link.send_payload(Payload::Abort {
            reason: AbortReason::KeyExhausted,
        })?;
        state.abort = Some(AbortReason::KeyExhausted);
        return Ok(());
    }
    let permutation_seed = rng.next_u64();
    link.send_payload(Payload::Permute {
        seed: permutation_seed,
        drop_last: drop_last as u32,
    })?;
    link.send_payload(Payload::DiscardIndices {
        indices: ledger.discarded_positions.iter().map(|&i| i as u32).collect(),
    })?;
    link.send_payload(Payload::Done)?;

    let reconciled = state.stages.last().expect("reconciled stage just pushed");
    let final_key = amplify(
        reconciled,
        &ledger,
        &AmplificationParams {
            security_margin: cfg.security_margin,
            permutation_seed,
        },
    )?;
    state.stages.push(final_key);
    Ok(())
}

/// Run the receiver endpoint over the given transports. Transport failures
/// come back as a report aborted with reason `transport`, not as `Err`.
pub fn run_receiver(
    cfg: &SessionConfig,
    mut photons: impl PhotonReceiver,
    mut link: impl MessageLink,
) -> Result<EndpointReport> {
    cfg.validate()?;
    let mut logged = LoggedLink::new(&mut link, cfg.session_id, Role::Receiver);
    let mut state = EndpointState::new(cfg);
    match receiver_phases(&mut state, &mut photons, &mut logged) {
        Ok(()) => {}
        Err(e) if e.is_transport() => state.abort = Some(AbortReason::Transport),
        Err(e) => return Err(e),
    }
    Ok(state.into_report(Role::Receiver, logged.into_entries()))
}

fn receiver_phases(
    state: &mut EndpointState,
    photons: &mut impl PhotonReceiver,
    link: &mut LoggedLink<'_, impl MessageLink>,
) -> Result<()> {
    let cfg = state.cfg.clone();
    let mut rng = SessionRng::from_seed(cfg.seed_receiver);

    // Steps 5-6: measure each photon in a fresh random basis.
    let mut own_bases = Vec::with_capacity(cfg.raw_bits);
    let mut own_bits = Vec::with_capacity(cfg.raw_bits);
    for _ in 0..cfg.raw_bits {
        let photon = photons.recv_photon()?;
        let basis = cfg.bases_mode.pick(&mut rng);
        let m = photon.measure(basis, &mut rng);
        own_bases.push(basis);
        own_bits.push(m.outcome);
    }
    state.bases = own_bases.clone();
    state.push_stage(KeyStage::Raw, own_bits.clone(), 0)?;

    // Step 7: compare bases, reply with the matching positions.
    let msg = link.recv_msg()?;
    let emitter_bases = match &msg.msg {
        Payload::Bases { bases } => {
            let bases = bases_from_string(bases)?;
            if bases.len() != cfg.raw_bits {
                return Err(Error::Protocol(format!(
                    "bases announcement for {} photons, expected {}",
                    bases.len(),
                    cfg.raw_bits
                )));
            }
            bases
        }
        Payload::Abort { reason } => {
            state.note_peer_abort(*reason);
            return Ok(());
        }
        _ => return Err(unexpected("bases", &msg)),
    };
    let kept: Vec<usize> = (0..cfg.raw_bits)
        .filter(|&i| emitter_bases[i] == own_bases[i])
        .collect();
    link.send_payload(Payload::MatchIndices {
        indices: kept.iter().map(|&i| i as u32).collect(),
    })?;
    let sifted: Vec<Bit> = kept.iter().map(|&i| own_bits[i]).collect();
    state.kept = kept;
    state.push_stage(KeyStage::Sifted, sifted.clone(), 0)?;

    // Error estimation: answer the emitter's check request.
    let msg = link.recv_msg()?;
    let (check_idx, emitter_check) = match &msg.msg {
        Payload::CheckRequest { indices, bits } => {
            let idx = to_usize_indices(indices, sifted.len())?;
            if idx.len() >= sifted.len() {
                return Err(Error::Protocol(
                    "check request would consume the whole key".into(),
                ));
            }
            (idx, bits.to_bits())
        }
        Payload::Abort { reason } => {
            state.note_peer_abort(*reason);
            return Ok(());
        }
        _ => return Err(unexpected("check_request", &msg)),
    };
    let own_check: Vec<Bit> = check_idx.iter().map(|&i| sifted[i]).collect();
    let qber = estimate_qber(&emitter_check, &own_check)?;
    state.qber = Some(qber);
    link.send_payload(Payload::CheckBits {
        bits: PackedBits::from_bits(&own_check),
    })?;
    let checked = remove_positions(&sifted, &check_idx);
    state.push_stage(KeyStage::Checked, checked.clone(), 0)?;

    // Both sides hold the same estimate; over threshold the emitter aborts.
    if qber > cfg.qber_threshold {
        let msg = link.recv_msg()?;
        return match msg.msg {
            Payload::Abort { reason } => {
                state.note_peer_abort(reason);
                Ok(())
            }
            _ => Err(unexpected("abort after threshold breach", &msg)),
        };
    }

    // Reconciliation: mirror the driver, flipping located bits.
    let outcome = reconcile_follower(checked, &cfg.reconciliation, qber, link)?;
    state.ledger = outcome.ledger.clone();
    state.push_stage(
        KeyStage::Reconciled,
        outcome.key.clone(),
        outcome.ledger.disclosed_parities,
    )?;

    // Final announcements, then amplify with the same public inputs.
    let msg = link.recv_msg()?;
    let (permutation_seed, drop_last) = match &msg.msg {
        Payload::Permute { seed, drop_last } => (*seed, *drop_last as usize),
        Payload::Abort { reason } => {
            state.note_peer_abort(*reason);
            return Ok(());
        }
        _ => return Err(unexpected("permute", &msg)),
    };
    if drop_last != outcome.ledger.disclosed_parities + cfg.security_margin {
        return Err(Error::Protocol(format!(
            "announced drop {} disagrees with ledger {} + margin {}",
            drop_last,
            outcome.ledger.disclosed_parities,
            cfg.security_margin
        )));
    }
    let msg = link.recv_msg()?;
    match &msg.msg {
        Payload::DiscardIndices { indices } => {
            let announced: Vec<usize> = indices.iter().map(|&i| i as usize).collect();
            let own: Vec<usize> = outcome.ledger.discarded_positions.iter().copied().collect();
            if announced != own {
                return Err(Error::Protocol(
                    "announced discard set disagrees with local ledger".into(),
                ));
            }
        }
        _ => return Err(unexpected("discard_indices", &msg)),
    }
    let msg = link.recv_msg()?;
    if !matches!(msg.msg, Payload::Done) {
        return Err(unexpected("done", &msg));
    }

    let reconciled = state.stages.last().expect("reconciled stage just pushed");
    let final_key = amplify(
        reconciled,
        &outcome.ledger,
        &AmplificationParams {
            security_margin: cfg.security_margin,
            permutation_seed,
        },
    )?;
    state.stages.push(final_key);
    Ok(())
}

impl Error {
    /// Whether this failure means the transport died (as opposed to a bug or
    /// a protocol violation).
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::ChannelClosed | Error::Io(_) | Error::Decode { .. })
    }
}

/// The adversary's bottom line for one session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarySummary {
    /// Photons Eve measured (not just saw).
    pub intercepted: usize,
    pub known_bits: usize,
    /// Fraction of the sifted key Eve knows.
    pub known_fraction: f64,
}

/// Everything a finished in-process session yields.
#[derive(Debug)]
pub struct SessionOutcome {
    pub emitter: EndpointReport,
    pub receiver: EndpointReport,
    /// Present when the adversary saw the whole public discussion.
    pub adversary: Option<AdversarySummary>,
}

impl SessionOutcome {
    pub fn qber_estimate(&self) -> Option<f64> {
        self.emitter.qber_estimate
    }

    pub fn detected(&self) -> bool {
        self.emitter.detected
    }

    pub fn abort(&self) -> Option<AbortReason> {
        self.emitter.abort
    }

    pub fn aborted(&self) -> bool {
        self.abort().is_some()
    }

    /// Classical messages in protocol order.
    pub fn transcript(&self) -> Vec<ClassicalMessage> {
        self.emitter.messages()
    }

    pub fn emitter_key(&self) -> &KeyMaterial {
        self.emitter.key()
    }

    pub fn receiver_key(&self) -> &KeyMaterial {
        self.receiver.key()
    }
}

/// Run a complete session in one process: the two endpoints on their own
/// threads, in-memory channels between them, the adversary attached to the
/// quantum path and wired to the classical wiretap.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutcome> {
    cfg.validate()?;
    let wiretap = Wiretap::default();
    let (link_e, link_r) = memory_classical_pair(Some(wiretap.clone()));
    let eve = Arc::new(Mutex::new(Eavesdropper::new(
        cfg.eve_intercept_prob,
        cfg.bases_mode,
        cfg.seed_eve,
    )));
    let (qtx, qrx) = memory_quantum_pair(
        cfg.noise_flip_prob,
        SessionRng::from_seed(cfg.seed_channel),
        Some(eve.clone() as SharedInterceptor),
    );

    let emitter_cfg = cfg.clone();
    let receiver_cfg = cfg.clone();
    let emitter_handle =
        thread::spawn(move || run_emitter(&emitter_cfg, qtx, link_e));
    let receiver_handle =
        thread::spawn(move || run_receiver(&receiver_cfg, qrx, link_r));
    let emitter = emitter_handle
        .join()
        .map_err(|_| Error::Protocol("emitter thread panicked".into()))??;
    let receiver = receiver_handle
        .join()
        .map_err(|_| Error::Protocol("receiver thread panicked".into()))??;

    let mut eve = Arc::try_unwrap(eve)
        .map_err(|_| Error::Protocol("adversary handle still shared".into()))?
        .into_inner()
        .map_err(|_| Error::Protocol("adversary lock poisoned".into()))?;
    for msg in wiretap.log() {
        eve.observe_classical(&msg);
    }
    let adversary = eve.knowledge_from_log().ok().map(|k| AdversarySummary {
        intercepted: eve.quantum_log().len(),
        known_bits: k.known_bits(),
        known_fraction: k.known_fraction,
    });

    debug_assert_eq!(emitter.messages(), receiver.messages());
    Ok(SessionOutcome {
        emitter,
        receiver,
        adversary,
    })
}
