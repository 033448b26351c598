//! Seeded random source shared by dataset splitting, weight initialization
//! and minibatch shuffling.
//!
//! The generator is xoshiro256** seeded through SplitMix64 from a single
//! `u64`. Index draws and the Fisher–Yates shuffle are written out here
//! (rather than delegated to `rand`'s distribution code) so that the exact
//! sequence is pinned by this crate and can be reproduced elsewhere.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-limit, limit)`.
    pub fn symmetric(&mut self, limit: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * limit
    }

    /// Index in `[0, bound)` via the 128-bit multiply-high reduction.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    /// In-place Fisher–Yates shuffle, iterating from the last slot down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A shuffled `0..n` permutation.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn known_first_draw() {
        // xoshiro256** seeded by SplitMix64(42); pins the upstream stream.
        assert_eq!(SeededRng::new(42).next_u64(), 1546998764402558742);
    }

    #[test]
    fn unit_draws_in_range() {
        let mut r = SeededRng::new(1);
        for _ in 0..10_000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
            let s = r.symmetric(0.5);
            assert!((-0.5..0.5).contains(&s));
            assert!(r.below(3) < 3);
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut r = SeededRng::new(3);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
