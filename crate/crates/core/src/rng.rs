//! Seeded random number generation with pinned-down derivations.
//!
//! Every randomized step in the crate (k-means++ seeding, fold shuffling,
//! synthetic data) goes through [`SeededRng`]. The generator is ChaCha8 and
//! each derived quantity is spelled out here rather than delegated to a
//! distribution library, so that a given seed produces the same stream on
//! every platform and across dependency upgrades:
//!
//! * `next_f64` takes the top 53 bits of `next_u64`, giving a uniform value
//!   in `[0, 1)`.
//! * `next_index(n)` uses rejection sampling on `next_u64` so every index is
//!   exactly equally likely.
//! * `shuffle` is a Fisher–Yates pass from the last element down.
//! * `weighted_index` walks the cumulative weight sum and returns the first
//!   index whose cumulative weight exceeds the draw.
//! * `next_gaussian` is Box–Muller with the second variate cached.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct SeededRng {
    inner: ChaCha8Rng,
    spare_gaussian: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { inner: ChaCha8Rng::seed_from_u64(seed), spare_gaussian: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index from `0..n`. Panics if `n` is zero.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index requires a non-empty range");
        let n = n as u64;
        let zone = (u64::MAX / n) * n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }

    /// Index drawn proportionally to `weights`. Weights must be non-negative,
    /// finite, and not all zero.
    pub fn weighted_index(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0 && total.is_finite());
        let draw = self.next_f64() * total;
        let mut cumulative = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            cumulative += w;
            if draw < cumulative {
                return i;
            }
        }
        // Rounding can leave `draw` at or above the final cumulative sum;
        // fall back to the last index with positive weight.
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
    }

    /// Standard normal draw via Box–Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // 1 - u keeps the argument of ln strictly positive.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }
}
