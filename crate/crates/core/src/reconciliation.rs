//! Interactive parity-based error correction over the classical channel.
//!
//! The emitter drives; its key is the reference and never changes. Each pass
//! partitions the working order into blocks, the sides compare block
//! parities, and every mismatched block is narrowed by halving — one
//! `BlockParity`/`ParityReply` exchange per level — until the differing bit
//! is found. The receiver flips that bit and both sides mark the position
//! discarded so privacy amplification removes it. Between passes a publicly
//! announced seed reshuffles the working order, which is what catches blocks
//! that hid an even number of errors.
//!
//! Every `BlockParity` the emitter sends counts as one fully leaked bit in
//! the [`LeakageLedger`]; no discounting.
//!
//! A sweep fixes at most one error per mismatched block, so a fixed pass
//! count leaves a noticeable residual at realistic error rates. When
//! shuffling is enabled and any sweep has found a mismatch, reconciliation
//! therefore keeps sweeping past the scheduled passes — at the first-pass
//! block length, fresh permutation each time — until two consecutive sweeps
//! come back clean, bounded by [`MAX_CONVERGENCE_SWEEPS`] extra sweeps.
//! Both sides observe every parity comparison, so they reach the stop
//! decision in lockstep without extra signalling.

use std::collections::BTreeSet;
use std::ops::Range;

use crate::amplification::derive_permutation;
use crate::bits::{hamming_distance, Bit};
use crate::channel::{memory_classical_pair, MessageLink, Wiretap};
use crate::error::{Error, Result};
use crate::message::{ClassicalMessage, Payload};
use crate::protocol::{LoggedLink, Role};
use crate::rng::SessionRng;

/// Knobs of the reconciliation stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconciliationParams {
    /// First-pass block length; `None` sizes it from the error estimate
    /// ([`auto_block_len`]). Doubles on every later pass.
    pub initial_block_len: Option<usize>,
    /// Number of passes (default 4).
    pub passes: u32,
    /// Whether to reshuffle between passes (default true).
    pub permute_between_passes: bool,
}

impl Default for ReconciliationParams {
    fn default() -> Self {
        ReconciliationParams {
            initial_block_len: None,
            passes: 4,
            permute_between_passes: true,
        }
    }
}

impl ReconciliationParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.initial_block_len {
            if b < 2 {
                return Err(Error::InvalidConfig(format!(
                    "initial_block_len must be at least 2, got {b}"
                )));
            }
        }
        if self.passes == 0 {
            return Err(Error::InvalidConfig("passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Upper bound on sweeps run beyond the scheduled passes while mismatched
/// blocks remain.
pub const MAX_CONVERGENCE_SWEEPS: u32 = 25;

/// Public-disclosure accounting carried into privacy amplification.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeakageLedger {
    /// Number of `BlockParity` messages sent by the emitter.
    pub disclosed_parities: usize,
    /// Positions (checked-key coordinates) removed by the discard policy.
    pub discarded_positions: BTreeSet<usize>,
}

/// XOR of the bits in a half-open range.
pub fn parity(bits: &[Bit], range: Range<usize>) -> Result<Bit> {
    if range.start > range.end || range.end > bits.len() {
        return Err(Error::InvalidInput(format!(
            "range {}..{} out of bounds for {} bits",
            range.start,
            range.end,
            bits.len()
        )));
    }
    Ok(bits[range].iter().fold(Bit::ZERO, |acc, &b| acc ^ b))
}

/// First-pass block length from the error estimate: `ceil(0.73 / qber)`
/// with the estimate floored at 1%, clamped to `[4, key_len / 2]` (the upper
/// bound wins if the interval is empty). Gives roughly one expected error
/// per starting block.
pub fn auto_block_len(qber_estimate: f64, key_len: usize) -> usize {
    let raw = (0.73 / qber_estimate.max(0.01)).ceil() as usize;
    let hi = (key_len / 2).max(2);
    raw.clamp(4.min(hi), hi)
}

fn block_len_for_pass(initial: usize, pass: u32, key_len: usize) -> usize {
    let doubled = if pass >= 64 {
        key_len
    } else {
        initial.saturating_mul(1usize << (pass - 1))
    };
    doubled.min(key_len)
}

/// Locate the differing position inside a range where the two keys are known
/// to have unequal parity, by the same halving the wire protocol performs.
/// Returns the position and the number of parities disclosed (the triggering
/// block parity plus one per level).
pub fn locate_error_pair(
    key_a: &[Bit],
    key_b: &[Bit],
    range: Range<usize>,
) -> Result<(usize, usize)> {
    if key_a.len() != key_b.len() {
        return Err(Error::InvalidInput("keys must have equal length".into()));
    }
    if parity(key_a, range.clone())? == parity(key_b, range.clone())? {
        return Err(Error::InvalidInput(
            "parities equal over the range: nothing to locate".into(),
        ));
    }
    let mut disclosures = 1;
    let (mut lo, mut hi) = (range.start, range.end);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        disclosures += 1;
        if parity(key_a, lo..mid)? != parity(key_b, lo..mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, disclosures))
}

/// Working order of key positions; block parities are taken over this view
/// so public shuffles never move actual key bits.
struct WorkingOrder {
    to_key: Vec<usize>,
}

impl WorkingOrder {
    fn identity(len: usize) -> WorkingOrder {
        WorkingOrder {
            to_key: (0..len).collect(),
        }
    }

    fn shuffle(&mut self, seed: u64) {
        let perm = derive_permutation(seed, self.to_key.len());
        self.to_key = perm.iter().map(|&j| self.to_key[j]).collect();
    }

    fn parity(&self, key: &[Bit], lo: usize, hi: usize) -> Bit {
        self.to_key[lo..hi]
            .iter()
            .fold(Bit::ZERO, |acc, &i| acc ^ key[i])
    }
}

fn unexpected(expected: &str, got: &ClassicalMessage) -> Error {
    Error::Protocol(format!("expected {expected}, got {}", got.tag()))
}

/// Emitter side of reconciliation. The key is the reference and is left
/// untouched; only the leakage ledger comes back.
pub(crate) fn reconcile_driver<L: MessageLink>(
    key: &[Bit],
    params: &ReconciliationParams,
    qber_estimate: f64,
    link: &mut LoggedLink<'_, L>,
    rng: &mut SessionRng,
) -> Result<LeakageLedger> {
    params.validate()?;
    let len = key.len();
    if len == 0 {
        return Err(Error::InvalidInput("cannot reconcile a zero-length key".into()));
    }
    let initial = params
        .initial_block_len
        .unwrap_or_else(|| auto_block_len(qber_estimate, len));
    let mut ledger = LeakageLedger::default();
    let mut order = WorkingOrder::identity(len);

    let mut pass: u32 = 0;
    loop {
        pass += 1;
        if pass > 1 && params.permute_between_passes {
            let seed = rng.next_u64();
            link.send_payload(Payload::Permute { seed, drop_last: 0 })?;
            order.shuffle(seed);
        }
        let block_len = block_len_for_pass(initial, pass.min(params.passes), len);
        let mut any_mismatch = false;
        let mut lo = 0;
        while lo < len {
            let hi = (lo + block_len).min(len);
            let own = order.parity(key, lo, hi);
            let theirs = exchange_parity(link, &mut ledger, pass, lo, hi, own)?;
            if theirs != own {
                any_mismatch = true;
                let mut slo = lo;
                let mut shi = hi;
                while shi - slo > 1 {
                    let mid = slo + (shi - slo) / 2;
                    let own = order.parity(key, slo, mid);
                    let theirs = exchange_parity(link, &mut ledger, pass, slo, mid, own)?;
                    if theirs != own {
                        shi = mid;
                    } else {
                        slo = mid;
                    }
                }
                ledger.discarded_positions.insert(order.to_key[slo]);
            }
            lo = hi;
        }
        if reconciliation_done(params, pass, any_mismatch) {
            break;
        }
    }
    Ok(ledger)
}

/// Shared stop rule: run the scheduled passes, then (when shuffling is on)
/// keep sweeping while mismatches remain, up to the convergence cap.
fn reconciliation_done(params: &ReconciliationParams, pass: u32, any_mismatch: bool) -> bool {
    if pass < params.passes {
        return false;
    }
    if !params.permute_between_passes {
        return pass >= params.passes;
    }
    !any_mismatch || pass >= params.passes + MAX_CONVERGENCE_SWEEPS
}

fn exchange_parity<L: MessageLink>(
    link: &mut LoggedLink<'_, L>,
    ledger: &mut LeakageLedger,
    pass: u32,
    lo: usize,
    hi: usize,
    own: Bit,
) -> Result<Bit> {
    link.send_payload(Payload::BlockParity {
        pass,
        lo: lo as u32,
        hi: hi as u32,
        parity: own,
    })?;
    ledger.disclosed_parities += 1;
    let reply = link.recv_msg()?;
    match reply.msg {
        Payload::ParityReply {
            pass: rp,
            lo: rlo,
            hi: rhi,
            parity,
        } if (rp, rlo as usize, rhi as usize) == (pass, lo, hi) => Ok(parity),
        _ => Err(unexpected("matching parity_reply", &reply)),
    }
}

/// Outcome of the receiver side: the corrected key plus its own accounting.
#[derive(Debug)]
pub(crate) struct FollowerOutcome {
    pub key: Vec<Bit>,
    pub ledger: LeakageLedger,
    /// Positions flipped, in discovery order (checked-key coordinates).
    pub corrected: Vec<usize>,
    /// Key state after each pass (test introspection).
    pub pass_snapshots: Vec<Vec<Bit>>,
}

/// Receiver side of reconciliation. Mirrors the driver's schedule exactly
/// and checks every received range against its own prediction.
pub(crate) fn reconcile_follower<L: MessageLink>(
    mut key: Vec<Bit>,
    params: &ReconciliationParams,
    qber_estimate: f64,
    link: &mut LoggedLink<'_, L>,
) -> Result<FollowerOutcome> {
    params.validate()?;
    let len = key.len();
    if len == 0 {
        return Err(Error::InvalidInput("cannot reconcile a zero-length key".into()));
    }
    let initial = params
        .initial_block_len
        .unwrap_or_else(|| auto_block_len(qber_estimate, len));
    let mut ledger = LeakageLedger::default();
    let mut corrected = Vec::new();
    let mut pass_snapshots = Vec::new();
    let mut order = WorkingOrder::identity(len);

    let mut pass: u32 = 0;
    loop {
        pass += 1;
        if pass > 1 && params.permute_between_passes {
            let msg = link.recv_msg()?;
            match msg.msg {
                Payload::Permute { seed, drop_last: 0 } => order.shuffle(seed),
                _ => return Err(unexpected("inter-pass permute", &msg)),
            }
        }
        let block_len = block_len_for_pass(initial, pass.min(params.passes), len);
        let mut any_mismatch = false;
        let mut lo = 0;
        while lo < len {
            let hi = (lo + block_len).min(len);
            let own = order.parity(&key, lo, hi);
            let theirs = answer_parity(link, &mut ledger, pass, lo, hi, own)?;
            if theirs != own {
                any_mismatch = true;
                let mut slo = lo;
                let mut shi = hi;
                while shi - slo > 1 {
                    let mid = slo + (shi - slo) / 2;
                    let own = order.parity(&key, slo, mid);
                    let theirs = answer_parity(link, &mut ledger, pass, slo, mid, own)?;
                    if theirs != own {
                        shi = mid;
                    } else {
                        slo = mid;
                    }
                }
                let position = order.to_key[slo];
                key[position] = key[position].flip();
                ledger.discarded_positions.insert(position);
                corrected.push(position);
            }
            lo = hi;
        }
        pass_snapshots.push(key.clone());
        if reconciliation_done(params, pass, any_mismatch) {
            break;
        }
    }
    Ok(FollowerOutcome {
        key,
        ledger,
        corrected,
        pass_snapshots,
    })
}

fn answer_parity<L: MessageLink>(
    link: &mut LoggedLink<'_, L>,
    ledger: &mut LeakageLedger,
    pass: u32,
    lo: usize,
    hi: usize,
    own: Bit,
) -> Result<Bit> {
    let msg = link.recv_msg()?;
    let theirs = match msg.msg {
        Payload::BlockParity {
            pass: rp,
            lo: rlo,
            hi: rhi,
            parity,
        } if (rp, rlo as usize, rhi as usize) == (pass, lo, hi) => parity,
        _ => return Err(unexpected("matching block_parity", &msg)),
    };
    ledger.disclosed_parities += 1;
    link.send_payload(Payload::ParityReply {
        pass,
        lo: lo as u32,
        hi: hi as u32,
        parity: own,
    })?;
    Ok(theirs)
}

/// Result of running both reconciliation sides over a loopback channel.
#[derive(Debug)]
pub struct ReconcileReport {
    pub emitter_key: Vec<Bit>,
    pub receiver_key: Vec<Bit>,
    pub ledger: LeakageLedger,
    /// Positions the receiver flipped.
    pub corrected: Vec<usize>,
    /// Hamming distance to the emitter key after each pass.
    pub pass_distances: Vec<usize>,
    /// Everything said on the channel, in order.
    pub messages: Vec<ClassicalMessage>,
}

/// Run a full reconciliation between two in-memory keys: the emitter side on
/// a helper thread, the receiver side here, a wiretap recording the
/// conversation. `session_seed` seeds the emitter's shuffle announcements.
pub fn reconcile_keys(
    key_a: &[Bit],
    key_b: &[Bit],
    params: &ReconciliationParams,
    qber_estimate: f64,
    session_seed: u64,
) -> Result<ReconcileReport> {
    if key_a.len() != key_b.len() {
        return Err(Error::InvalidInput("keys must have equal length".into()));
    }
    let tap = Wiretap::default();
    let (mut link_a, mut link_b) = memory_classical_pair(Some(tap.clone()));
    let driver_key = key_a.to_vec();
    let driver_params = params.clone();
    let driver = std::thread::spawn(move || -> Result<LeakageLedger> {
        let mut rng = SessionRng::from_seed(session_seed);
        let mut logged = LoggedLink::new(&mut link_a, 0, Role::Emitter);
        reconcile_driver(&driver_key, &driver_params, qber_estimate, &mut logged, &mut rng)
    });
    let mut logged_b = LoggedLink::new(&mut link_b, 0, Role::Receiver);
    let follower = reconcile_follower(key_b.to_vec(), params, qber_estimate, &mut logged_b);
    let driver_ledger = driver
        .join()
        .map_err(|_| Error::Protocol("reconciliation driver thread panicked".into()))??;
    let follower = follower?;
    debug_assert_eq!(driver_ledger, follower.ledger);
    let pass_distances = follower
        .pass_snapshots
        .iter()
        .map(|snap| hamming_distance(key_a, snap))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconcileReport {
        emitter_key: key_a.to_vec(),
        receiver_key: follower.key,
        ledger: follower.ledger,
        corrected: follower.corrected,
        pass_distances,
        messages: tap.log(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits_from_str;

    fn random_bits(seed: u64, len: usize) -> Vec<Bit> {
        let mut rng = SessionRng::from_seed(seed);
        (0..len).map(|_| rng.bit()).collect()
    }

    #[test]
    fn parity_examples() {
        let bits = bits_from_str("110").unwrap();
        assert_eq!(parity(&bits, 0..3).unwrap(), Bit::ZERO);
        let bits = bits_from_str("1000").unwrap();
        assert_eq!(parity(&bits, 0..1).unwrap(), Bit::ONE);
        assert!(parity(&bits, 2..5).is_err());
    }

    #[test]
    fn parity_matches_brute_force_sum() {
        // independent oracle: count of ones mod 2
        for seed in 0..20 {
            let bits = random_bits(seed, 64);
            let ones = bits.iter().filter(|b| b.as_bool()).count();
            assert_eq!(parity(&bits, 0..64).unwrap().as_u8() as usize, ones % 2);
        }
    }

    #[test]
    fn locate_error_finds_single_differing_bit() {
        let a = bits_from_str("01101011").unwrap();
        let mut b = a.clone();
        b[5] = b[5].flip();
        let (idx, disclosures) = locate_error_pair(&a, &b, 0..8).unwrap();
        assert_eq!(idx, 5);
        assert!(disclosures <= 8usize.ilog2() as usize + 1);
    }

    #[test]
    fn locate_error_base_cases() {
        let a = bits_from_str("10").unwrap();
        let mut b = a.clone();
        b[0] = b[0].flip();
        assert_eq!(locate_error_pair(&a, &b, 0..2).unwrap(), (0, 2));

        let a = bits_from_str("1").unwrap();
        let b = bits_from_str("0").unwrap();
        assert_eq!(locate_error_pair(&a, &b, 0..1).unwrap(), (0, 1));
    }

    #[test]
    fn locate_error_rejects_equal_parities() {
        let a = bits_from_str("1010").unwrap();
        assert!(locate_error_pair(&a, &a, 0..4).is_err());
    }

    #[test]
    fn locate_error_agrees_with_position_compare_oracle() {
        // with several errors it must still return a genuinely differing spot
        for seed in 0..50 {
            let a = random_bits(seed, 128);
            let mut b = a.clone();
            let mut rng = SessionRng::from_seed(seed + 1000);
            let flips = 1 + 2 * rng.index(3); // odd number keeps parities unequal
            for i in rng.sample_indices(128, flips) {
                b[i] = b[i].flip();
            }
            let (idx, _) = locate_error_pair(&a, &b, 0..128).unwrap();
            assert_ne!(a[idx], b[idx], "seed {seed}: position {idx} does not differ");
        }
    }

    #[test]
    fn auto_block_len_follows_estimate() {
        assert_eq!(auto_block_len(0.03, 1024), 25);
        assert_eq!(auto_block_len(0.25, 1024), 4); // clamped up from 3
        assert_eq!(auto_block_len(0.0, 1024), 73); // floored at 1%
        assert_eq!(auto_block_len(0.001, 100), 50); // clamped to len/2
    }

    #[test]
    fn identical_keys_disclose_one_parity_per_block() {
        let key = random_bits(5, 256);
        let params = ReconciliationParams {
            initial_block_len: Some(32),
            passes: 2,
            permute_between_passes: true,
        };
        let report = reconcile_keys(&key, &key, &params, 0.0, 99).unwrap();
        assert_eq!(report.receiver_key, key);
        assert!(report.corrected.is_empty());
        // pass 1: 256/32 = 8 blocks, pass 2: 256/64 = 4 blocks
        assert_eq!(report.ledger.disclosed_parities, 12);
        let block_parities = report
            .messages
            .iter()
            .filter(|m| matches!(m.msg, Payload::BlockParity { .. }))
            .count();
        assert_eq!(block_parities, 12);
    }

    #[test]
    fn single_error_is_corrected_in_one_pass() {
        for seed in 0..100 {
            let a = random_bits(seed, 1024);
            let mut b = a.clone();
            let pos = SessionRng::from_seed(seed ^ 0xabcd).index(1024);
            b[pos] = b[pos].flip();
            let params = ReconciliationParams {
                initial_block_len: None,
                passes: 1,
                permute_between_passes: false,
            };
            let report = reconcile_keys(&a, &b, &params, 0.001, seed).unwrap();
            assert_eq!(report.receiver_key, a, "seed {seed}");
            assert_eq!(report.corrected, vec![pos]);
            assert_eq!(
                report.ledger.discarded_positions.iter().copied().collect::<Vec<_>>(),
                vec![pos]
            );
        }
    }

    #[test]
    fn emitter_key_is_never_modified() {
        let a = random_bits(7, 512);
        let mut b = a.clone();
        for i in SessionRng::from_seed(8).sample_indices(512, 20) {
            b[i] = b[i].flip();
        }
        let report = reconcile_keys(&a, &b, &ReconciliationParams::default(), 0.04, 3).unwrap();
        assert_eq!(report.emitter_key, a);
    }

    #[test]
    fn hamming_distance_never_increases_across_passes() {
        for seed in 0..20 {
            let a = random_bits(seed, 512);
            let mut b = a.clone();
            for i in SessionRng::from_seed(seed + 500).sample_indices(512, 15) {
                b[i] = b[i].flip();
            }
            let report =
                reconcile_keys(&a, &b, &ReconciliationParams::default(), 0.03, seed).unwrap();
            let mut last = hamming_distance(&a, &b).unwrap();
            for &d in &report.pass_distances {
                assert!(d <= last, "seed {seed}: distance went {last} -> {d}");
                last = d;
            }
        }
    }

    #[test]
    fn three_percent_error_rate_reconciles_reliably() {
        let mut successes = 0;
        for seed in 0..100 {
            let a = random_bits(seed, 1024);
            let mut b = a.clone();
            let mut rng = SessionRng::from_seed(seed + 9000);
            for i in 0..1024 {
                if rng.chance(0.03) {
                    b[i] = b[i].flip();
                }
            }
            let report =
                reconcile_keys(&a, &b, &ReconciliationParams::default(), 0.03, seed).unwrap();
            if report.receiver_key == report.emitter_key {
                successes += 1;
            }
        }
        assert!(successes >= 99, "only {successes}/100 trials converged");
    }

    #[test]
    fn disclosed_parities_match_transcript_count() {
        let a = random_bits(42, 300);
        let mut b = a.clone();
        for i in SessionRng::from_seed(43).sample_indices(300, 9) {
            b[i] = b[i].flip();
        }
        let report = reconcile_keys(&a, &b, &ReconciliationParams::default(), 0.03, 44).unwrap();
        let block_parities = report
            .messages
            .iter()
            .filter(|m| matches!(m.msg, Payload::BlockParity { .. }))
            .count();
        assert_eq!(report.ledger.disclosed_parities, block_parities);
    }

    #[test]
    fn zero_length_key_is_rejected() {
        assert!(reconcile_keys(&[], &[], &ReconciliationParams::default(), 0.0, 1).is_err());
    }

    #[test]
    fn params_validation() {
        let bad = ReconciliationParams {
            initial_block_len: Some(1),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ReconciliationParams {
            passes: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
