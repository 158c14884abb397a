//! Final key distillation: discard, publicly seeded permutation, trailing
//! drop.
//!
//! Both endpoints run [`amplify`] on their reconciled keys with the same
//! public inputs (the announced permutation seed, the shared discard set, and
//! the parity-disclosure count), so equal reconciled keys always distill to
//! identical final keys. The output length is exactly
//! `reconciled - discarded - disclosed_parities - security_margin`.

use crate::bits::Bit;
use crate::error::{Error, Result};
use crate::protocol::{KeyMaterial, KeyStage};
use crate::reconciliation::LeakageLedger;
use crate::rng::SessionRng;

/// Amplification inputs beyond the key itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmplificationParams {
    /// Extra bits removed on top of the disclosed-parity count (default 16).
    pub security_margin: usize,
    /// Publicly announced shuffle seed.
    pub permutation_seed: u64,
}

pub const DEFAULT_SECURITY_MARGIN: usize = 16;

/// Deterministic uniform permutation of `0..length` from a public seed
/// (Fisher–Yates over a ChaCha20 stream, see [`SessionRng`]).
pub fn derive_permutation(seed: u64, length: usize) -> Vec<usize> {
    SessionRng::from_seed(seed).permutation(length)
}

/// Distill a reconciled key into its final form.
///
/// Removes the discarded positions, applies the seed-derived permutation,
/// then drops the last `disclosed_parities + security_margin` bits. Fails
/// with [`Error::KeyExhausted`] when nothing (or less) would remain.
pub fn amplify(
    key: &KeyMaterial,
    ledger: &LeakageLedger,
    params: &AmplificationParams,
) -> Result<KeyMaterial> {
    if key.stage() != KeyStage::Reconciled {
        return Err(Error::InvalidInput(format!(
            "amplify needs a reconciled key, got stage {}",
            key.stage().as_str()
        )));
    }
    if let Some(&bad) = ledger
        .discarded_positions
        .iter()
        .find(|&&p| p >= key.len())
    {
        return Err(Error::InvalidInput(format!(
            "discard position {bad} beyond key length {}",
            key.len()
        )));
    }
    let kept: Vec<Bit> = key
        .bits()
        .iter()
        .enumerate()
        .filter(|(i, _)| !ledger.discarded_positions.contains(i))
        .map(|(_, &b)| b)
        .collect();
    let drop_last = ledger.disclosed_parities + params.security_margin;
    if kept.len() <= drop_last {
        return Err(Error::KeyExhausted(format!(
            "{} bits left after discards, need to drop {drop_last}",
            kept.len()
        )));
    }
    let perm = derive_permutation(params.permutation_seed, kept.len());
    let mut shuffled: Vec<Bit> = perm.iter().map(|&j| kept[j]).collect();
    shuffled.truncate(kept.len() - drop_last);
    key.advance(KeyStage::Final, shuffled, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn reconciled(len: usize, seed: u64) -> KeyMaterial {
        let mut rng = SessionRng::from_seed(seed);
        let bits: Vec<Bit> = (0..len).map(|_| rng.bit()).collect();
        KeyMaterial::new(bits, KeyStage::Reconciled, 0)
    }

    fn ledger(disclosed: usize, discards: &[usize]) -> LeakageLedger {
        LeakageLedger {
            disclosed_parities: disclosed,
            discarded_positions: discards.iter().copied().collect::<BTreeSet<_>>(),
        }
    }

    #[test]
    fn permutation_of_length_one_is_identity() {
        assert_eq!(derive_permutation(123, 1), vec![0]);
    }

    #[test]
    fn permutation_is_a_bijection_for_any_seed() {
        for seed in [0u64, 1, 42, u64::MAX] {
            let mut p = derive_permutation(seed, 100);
            p.sort_unstable();
            assert_eq!(p, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn golden_permutation_seed_42_len_8() {
        // pinned for cross-version stability
        assert_eq!(derive_permutation(42, 8), vec![7, 3, 6, 4, 1, 5, 2, 0]);
    }

    #[test]
    fn length_law_is_exact() {
        let key = reconciled(100, 1);
        let params = AmplificationParams {
            security_margin: 10,
            permutation_seed: 7,
        };
        let out = amplify(&key, &ledger(20, &[]), &params).unwrap();
        assert_eq!(out.len(), 70);
        assert_eq!(out.stage(), KeyStage::Final);
    }

    #[test]
    fn discards_come_off_first() {
        let key = reconciled(64, 2);
        let params = AmplificationParams {
            security_margin: 4,
            permutation_seed: 9,
        };
        let out = amplify(&key, &ledger(8, &[0, 5, 63]), &params).unwrap();
        assert_eq!(out.len(), 64 - 3 - 8 - 4);
    }

    #[test]
    fn exhaustion_is_refused() {
        let key = reconciled(30, 3);
        let params = AmplificationParams {
            security_margin: 10,
            permutation_seed: 1,
        };
        // drop == remaining length (exactly zero output) is refused too
        assert!(matches!(
            amplify(&key, &ledger(20, &[]), &params),
            Err(Error::KeyExhausted(_))
        ));
        // one surviving bit is the minimum that passes
        let out = amplify(&key, &ledger(19, &[]), &params).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn equal_inputs_give_identical_outputs() {
        let key_a = reconciled(200, 4);
        let key_b = KeyMaterial::new(key_a.bits().to_vec(), KeyStage::Reconciled, 0);
        let params = AmplificationParams {
            security_margin: 16,
            permutation_seed: 0xfeed,
        };
        let l = ledger(30, &[3, 77, 150]);
        let out_a = amplify(&key_a, &l, &params).unwrap();
        let out_b = amplify(&key_b, &l, &params).unwrap();
        assert_eq!(out_a.bits(), out_b.bits());
    }

    #[test]
    fn more_disclosure_never_lengthens_the_key() {
        let key = reconciled(128, 5);
        let params = AmplificationParams {
            security_margin: 8,
            permutation_seed: 11,
        };
        let mut last = usize::MAX;
        for disclosed in [0, 10, 20, 40, 80] {
            let len = amplify(&key, &ledger(disclosed, &[]), &params)
                .map(|k| k.len())
                .unwrap_or(0);
            assert!(len <= last);
            last = len;
        }
    }

    #[test]
    fn wrong_stage_is_rejected() {
        let raw = KeyMaterial::new(vec![Bit::ZERO; 50], KeyStage::Checked, 0);
        let params = AmplificationParams {
            security_margin: 1,
            permutation_seed: 1,
        };
        assert!(amplify(&raw, &ledger(0, &[]), &params).is_err());
    }

    #[test]
    fn out_of_bounds_discard_is_rejected() {
        let key = reconciled(10, 6);
        let params = AmplificationParams {
            security_margin: 0,
            permutation_seed: 1,
        };
        assert!(amplify(&key, &ledger(0, &[10]), &params).is_err());
    }
}
