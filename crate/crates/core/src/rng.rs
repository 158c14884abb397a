//! Deterministic randomness.
//!
//! Every random decision in a session flows through a [`SessionRng`]: a
//! ChaCha20 stream generator (`rand_chacha`) keyed from a 64-bit seed with
//! `SeedableRng::seed_from_u64` (a SplitMix64 expansion). ChaCha20 output is
//! specified independently of platform and endianness, so a seed reproduces
//! the same session everywhere.
//!
//! All derived draws are defined here, on top of raw `next_u64` output:
//!
//! * `bit` — low bit of the next word;
//! * `uniform_f64` — top 53 bits scaled to `[0, 1)`;
//! * `chance(p)` — `uniform_f64() < p`, always consuming exactly one word;
//! * `index(n)` — rejection sampling, no modulo bias;
//! * `permutation` / `sample_indices` — Fisher–Yates on top of `index`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bits::Bit;

/// Seedable deterministic random source.
#[derive(Debug, Clone)]
pub struct SessionRng {
    inner: ChaCha20Rng,
}

impl SessionRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform random bit.
    pub fn bit(&mut self) -> Bit {
        Bit::from(self.next_u64() & 1 == 1)
    }

    /// Uniform draw from `[0, 1)` with 53 bits of precision.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Bernoulli draw with probability `p` (clamped to `[0, 1]`).
    /// Always consumes exactly one word so caller streams stay aligned.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform_f64() < p
    }

    /// Uniform index in `0..n`. Rejection sampling keeps it exact.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() needs a non-empty range");
        let bound = n as u64;
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Uniform permutation of `0..n` (Fisher–Yates, high index down).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i + 1);
            out.swap(i, j);
        }
        out
    }

    /// Uniform `k`-subset of `0..n`, returned sorted ascending.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        let mut chosen = pool[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SessionRng::from_seed(42);
        let mut b = SessionRng::from_seed(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn chance_consumes_one_word_even_at_extremes() {
        let mut a = SessionRng::from_seed(7);
        let mut b = SessionRng::from_seed(7);
        assert!(!a.chance(0.0));
        assert!(b.chance(1.0));
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn bit_frequency_is_balanced() {
        let mut rng = SessionRng::from_seed(1);
        let ones: usize = (0..10_000).filter(|_| rng.bit().as_bool()).count();
        let freq = ones as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut rng = SessionRng::from_seed(3);
        let mut p = rng.permutation(257);
        p.sort_unstable();
        assert_eq!(p, (0..257).collect::<Vec<_>>());
    }

    #[test]
    fn sample_indices_sorted_distinct_in_range() {
        let mut rng = SessionRng::from_seed(9);
        let s = rng.sample_indices(100, 25);
        assert_eq!(s.len(), 25);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|&i| i < 100));
    }

    #[test]
    fn index_covers_small_range_uniformly() {
        let mut rng = SessionRng::from_seed(11);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[rng.index(3)] += 1;
        }
        for c in counts {
            let freq = c as f64 / 30_000.0;
            assert!((freq - 1.0 / 3.0).abs() < 0.02, "freq {freq}");
        }
    }
}
