//! Photon polarization states, conjugate bases, and projective measurement.
//!
//! Six polarization states carry one bit each: 0°, 45° and left circular spin
//! encode 0; 90°, 135° and right circular spin encode 1. The states split into
//! three mutually conjugate bases (rectilinear, diagonal, circular). Measuring
//! in a photon's own basis reads its bit deterministically; measuring in any
//! other basis yields a fair coin and collapses the photon into the measured
//! basis.

use crate::bits::Bit;
use crate::error::{Error, Result};
use crate::rng::SessionRng;

/// Measurement orientation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// 0° / 90° linear polarization.
    Rectilinear,
    /// 45° / 135° linear polarization.
    Diagonal,
    /// Left / right circular polarization.
    Circular,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Rectilinear, Basis::Diagonal, Basis::Circular];

    /// The two states of this basis, in bit order (bit 0 first).
    pub fn states(self) -> [Polarization; 2] {
        match self {
            Basis::Rectilinear => [Polarization::Deg0, Polarization::Deg90],
            Basis::Diagonal => [Polarization::Deg45, Polarization::Deg135],
            Basis::Circular => [Polarization::SpinL, Polarization::SpinR],
        }
    }

    /// One-letter wire code.
    pub fn code(self) -> char {
        match self {
            Basis::Rectilinear => 'R',
            Basis::Diagonal => 'D',
            Basis::Circular => 'C',
        }
    }

    pub fn from_code(c: char) -> Result<Basis> {
        match c {
            'R' => Ok(Basis::Rectilinear),
            'D' => Ok(Basis::Diagonal),
            'C' => Ok(Basis::Circular),
            other => Err(Error::InvalidMessage(format!("unknown basis code {other:?}"))),
        }
    }
}

/// Which bases a session draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasesMode {
    /// Rectilinear and diagonal only (the standard protocol).
    #[default]
    TwoBasis,
    /// All three bases, circular included.
    ThreeBasis,
}

impl BasesMode {
    pub fn enabled(self) -> &'static [Basis] {
        match self {
            BasesMode::TwoBasis => &Basis::ALL[..2],
            BasesMode::ThreeBasis => &Basis::ALL,
        }
    }

    /// Uniform draw over the enabled bases (one `index` draw).
    pub fn pick(self, rng: &mut SessionRng) -> Basis {
        let enabled = self.enabled();
        enabled[rng.index(enabled.len())]
    }
}

/// Polarization state of a single photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
    SpinL,
    SpinR,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::Deg0,
        Polarization::Deg45,
        Polarization::Deg90,
        Polarization::Deg135,
        Polarization::SpinL,
        Polarization::SpinR,
    ];

    /// The basis this state belongs to.
    pub fn basis(self) -> Basis {
        match self {
            Polarization::Deg0 | Polarization::Deg90 => Basis::Rectilinear,
            Polarization::Deg45 | Polarization::Deg135 => Basis::Diagonal,
            Polarization::SpinL | Polarization::SpinR => Basis::Circular,
        }
    }

    /// Single-byte wire code (socket quantum stream).
    pub fn to_byte(self) -> u8 {
        match self {
            Polarization::Deg0 => 0,
            Polarization::Deg45 => 1,
            Polarization::Deg90 => 2,
            Polarization::Deg135 => 3,
            Polarization::SpinL => 4,
            Polarization::SpinR => 5,
        }
    }

    pub fn from_byte(b: u8) -> Result<Polarization> {
        Polarization::ALL
            .get(b as usize)
            .copied()
            .ok_or_else(|| Error::Decode {
                offset: 0,
                reason: format!("unknown polarization code {b}"),
            })
    }
}

/// Prepare a photon carrying `bit` in `basis`.
pub fn encode(bit: Bit, basis: Basis) -> Polarization {
    basis.states()[bit.as_u8() as usize]
}

/// The bit a state carries when read in its own basis.
pub fn decode(polarization: Polarization) -> Bit {
    match polarization {
        Polarization::Deg0 | Polarization::Deg45 | Polarization::SpinL => Bit::ZERO,
        Polarization::Deg90 | Polarization::Deg135 | Polarization::SpinR => Bit::ONE,
    }
}

/// Result of measuring a photon: the observed bit and the state the photon
/// collapsed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measurement {
    pub outcome: Bit,
    pub collapsed: Polarization,
}

/// Measure a photon in `basis`, consuming the input state.
///
/// Matching basis: deterministic outcome, state unchanged. Conjugate basis:
/// fair coin from `rng`, and the photon collapses onto the measured basis.
pub fn measure(photon: Polarization, basis: Basis, rng: &mut SessionRng) -> Measurement {
    if photon.basis() == basis {
        Measurement {
            outcome: decode(photon),
            collapsed: photon,
        }
    } else {
        let outcome = rng.bit();
        Measurement {
            outcome,
            collapsed: encode(outcome, basis),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_table_is_exact() {
        // The six-state table, exhaustively.
        assert_eq!(encode(Bit::ZERO, Basis::Rectilinear), Polarization::Deg0);
        assert_eq!(encode(Bit::ONE, Basis::Rectilinear), Polarization::Deg90);
        assert_eq!(encode(Bit::ZERO, Basis::Diagonal), Polarization::Deg45);
        assert_eq!(encode(Bit::ONE, Basis::Diagonal), Polarization::Deg135);
        assert_eq!(encode(Bit::ZERO, Basis::Circular), Polarization::SpinL);
        assert_eq!(encode(Bit::ONE, Basis::Circular), Polarization::SpinR);

        assert_eq!(decode(Polarization::Deg0), Bit::ZERO);
        assert_eq!(decode(Polarization::Deg45), Bit::ZERO);
        assert_eq!(decode(Polarization::SpinL), Bit::ZERO);
        assert_eq!(decode(Polarization::Deg90), Bit::ONE);
        assert_eq!(decode(Polarization::Deg135), Bit::ONE);
        assert_eq!(decode(Polarization::SpinR), Bit::ONE);
    }

    #[test]
    fn encode_decode_round_trip() {
        for basis in Basis::ALL {
            for bit in [Bit::ZERO, Bit::ONE] {
                let p = encode(bit, basis);
                assert_eq!(p.basis(), basis);
                assert_eq!(decode(p), bit);
            }
        }
    }

    #[test]
    fn matching_basis_is_deterministic_for_every_seed() {
        for seed in 0..20 {
            let mut rng = SessionRng::from_seed(seed);
            for p in Polarization::ALL {
                let m = measure(p, p.basis(), &mut rng);
                assert_eq!(m.outcome, decode(p));
                assert_eq!(m.collapsed, p);
            }
        }
    }

    #[test]
    fn mismatched_basis_collapses_into_measured_basis() {
        // Exhaustive over the 6 states x 3 bases, many trials each.
        let mut rng = SessionRng::from_seed(99);
        for p in Polarization::ALL {
            for basis in Basis::ALL {
                if basis == p.basis() {
                    continue;
                }
                for _ in 0..200 {
                    let m = measure(p, basis, &mut rng);
                    assert_eq!(m.collapsed.basis(), basis);
                    assert_eq!(decode(m.collapsed), m.outcome);
                }
            }
        }
    }

    #[test]
    fn mismatched_basis_outcome_is_a_fair_coin() {
        // Spot-checked pairs per the conjugate-variable rule; 10^4 trials each.
        let cases = [
            (Polarization::Deg45, Basis::Rectilinear),
            (Polarization::Deg0, Basis::Diagonal),
            (Polarization::SpinL, Basis::Diagonal),
            (Polarization::Deg90, Basis::Circular),
        ];
        for (photon, basis) in cases {
            let mut rng = SessionRng::from_seed(4242);
            let ones: usize = (0..10_000)
                .filter(|_| measure(photon, basis, &mut rng).outcome.as_bool())
                .count();
            let mean = ones as f64 / 10_000.0;
            assert!(
                (0.48..=0.52).contains(&mean),
                "{photon:?} in {basis:?}: mean {mean}"
            );
        }
    }

    #[test]
    fn spin_left_in_diagonal_lands_on_diagonal_states() {
        let mut rng = SessionRng::from_seed(7);
        for _ in 0..1000 {
            let m = measure(Polarization::SpinL, Basis::Diagonal, &mut rng);
            assert!(matches!(
                m.collapsed,
                Polarization::Deg45 | Polarization::Deg135
            ));
        }
    }

    #[test]
    fn basis_codes_round_trip() {
        for b in Basis::ALL {
            assert_eq!(Basis::from_code(b.code()).unwrap(), b);
        }
        assert!(Basis::from_code('x').is_err());
    }

    #[test]
    fn polarization_bytes_round_trip() {
        for p in Polarization::ALL {
            assert_eq!(Polarization::from_byte(p.to_byte()).unwrap(), p);
        }
        assert!(Polarization::from_byte(6).is_err());
    }
}
