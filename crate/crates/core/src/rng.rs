//! Seedable, splittable, counter-based random stream.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood, 2014). Output `n`
//! (zero-based) of a stream seeded with `s` is `mix(s + (n + 1) * GAMMA)`,
//! so any draw can be computed directly from `(seed, n)` without touching
//! the preceding ones. That property is what makes streams cheap to split
//! and easy to replay from another language.
//!
//! Conversions are pinned:
//!
//! * `next_f64` = `(next_u64 >> 11) * 2^-53`, a value in `[0, 1)`.
//! * `uniform(lo, hi)` = `lo + (hi - lo) * next_f64`.
//! * `index(n)` = `floor(next_f64 * n)`, clamped to `n - 1`.
//! * `split(seed, i)` = output `i` of the stream seeded with `seed`.

use serde::{Deserialize, Serialize};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output `n` of the stream seeded with `seed`, computed without iteration.
#[inline]
pub fn draw_at(seed: u64, n: u64) -> u64 {
    mix(seed.wrapping_add(n.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Seed of the child stream with stable index `index`.
pub fn split(seed: u64, index: u64) -> u64 {
    draw_at(seed, index)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawStream {
    seed: u64,
    consumed: u64,
}

impl DrawStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, consumed: 0 }
    }

    /// Child stream for a record/replicate index.
    pub fn child(seed: u64, index: u64) -> Self {
        Self::new(split(seed, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit draws consumed so far.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = draw_at(self.seed, self.consumed);
        self.consumed += 1;
        v
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n`. `n` must be non-zero.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal draw (Box-Muller, consumes two draws, cosine branch).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Conformance fixture: `(seed -> first N draws)`, plus a few split seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamFixture {
    pub algorithm: String,
    pub seed: u64,
    pub draws_u64: Vec<u64>,
    pub draws_f64: Vec<f64>,
    pub split_seeds: Vec<u64>,
}

impl StreamFixture {
    pub fn generate(seed: u64, n_draws: usize, n_splits: usize) -> Self {
        let mut s = DrawStream::new(seed);
        let draws_u64: Vec<u64> = (0..n_draws).map(|_| s.next_u64()).collect();
        let mut s = DrawStream::new(seed);
        let draws_f64 = (0..n_draws).map(|_| s.next_f64()).collect();
        let split_seeds = (0..n_splits as u64).map(|i| split(seed, i)).collect();
        Self {
            algorithm: "splitmix64".to_string(),
            seed,
            draws_u64,
            draws_f64,
            split_seeds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64_sequence() {
        // Reference values of the canonical SplitMix64 with state 0:
        // 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F.
        let mut s = DrawStream::new(0);
        assert_eq!(s.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(s.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(s.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn random_access_agrees_with_sequential() {
        let mut s = DrawStream::new(42);
        for n in 0..100 {
            assert_eq!(s.next_u64(), draw_at(42, n));
        }
        assert_eq!(s.consumed(), 100);
    }

    #[test]
    fn unit_interval_and_index_range() {
        let mut s = DrawStream::new(7);
        for _ in 0..10_000 {
            let u = s.next_f64();
            assert!((0.0..1.0).contains(&u));
            assert!(s.index(5) < 5);
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..50).collect();
        DrawStream::new(3).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
