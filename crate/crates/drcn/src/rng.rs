//! Seeded randomness. Every stochastic choice in the crate (init, dropout,
//! shuffling, OOV vectors) draws from a [`DrcnRng`] seeded from the run seed,
//! so a run is a pure function of (seed, config, data).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct DrcnRng {
    inner: ChaCha8Rng,
}

impl DrcnRng {
    pub fn seed_from(seed: u64) -> Self {
        DrcnRng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Derive an independent stream for a named purpose. Keeps e.g. dropout
    /// draws from perturbing shuffle order between configs.
    pub fn stream(seed: u64, tag: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tag.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self::seed_from(seed ^ h)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.inner.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box–Muller (stable across dependency versions).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(f64::MIN_POSITIVE);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn normal_scaled(&mut self, std: f64) -> f64 {
        self.normal() * std
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Glorot-uniform weight initialization for a fan_in×fan_out matrix.
    pub fn glorot(&mut self, fan_in: usize, fan_out: usize) -> Vec<f64> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..fan_in * fan_out).map(|_| self.range(-bound, bound)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = DrcnRng::seed_from(7);
        let mut b = DrcnRng::seed_from(7);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = DrcnRng::stream(7, "dropout");
        let mut b = DrcnRng::stream(7, "shuffle");
        let xs: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn normal_moments_roughly_standard() {
        let mut r = DrcnRng::seed_from(3);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
