//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, index)`: the word at
//! counter `i` is the SplitMix64 output for state `key + (i + 1) * GAMMA`,
//! where `key` mixes the seed and stream id. Streams are split with
//! [`GaussianSampler::fork`], so Monte Carlo loops can be evaluated in any
//! order or chunking and still reproduce the same samples bit for bit.

use std::f64::consts::TAU;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic, splittable source of uniform and gaussian variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GaussianSampler {
    seed: u64,
    stream: u64,
    key: u64,
}

impl GaussianSampler {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let key = mix64(seed ^ mix64(stream.wrapping_add(0x6A09_E667_F3BC_C909)));
        Self { seed, stream, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream identified by `label`. Forking is itself deterministic,
    /// and distinct labels give statistically independent streams.
    pub fn fork(&self, label: u64) -> Self {
        Self::with_stream(self.seed, mix64(self.stream ^ mix64(label ^ GAMMA)))
    }

    /// Child stream named by a string label.
    pub fn fork_named(&self, label: &str) -> Self {
        // FNV-1a; only needs to be stable, not strong.
        let h = label
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
            });
        self.fork(h)
    }

    #[inline]
    pub fn word(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.word(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn bit(&self, counter: u64) -> bool {
        self.word(counter) >> 63 == 1
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift; the bias is
    /// below 2^-32 for the bounds used here).
    #[inline]
    pub fn below(&self, counter: u64, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.word(counter) as u128 * bound as u128) >> 64) as u64
    }

    /// Standard normal variate number `index` (Box-Muller on counters
    /// `2 * index` and `2 * index + 1`, modulo 2^64).
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        let c = index.wrapping_mul(2);
        let u1 = self.uniform(c);
        let u2 = self.uniform(c.wrapping_add(1));
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// Centered gaussian with the given variance. Zero variance yields exactly 0.
    #[inline]
    pub fn gaussian(&self, index: u64, variance: f64) -> f64 {
        if variance == 0.0 {
            0.0
        } else {
            variance.sqrt() * self.normal(index)
        }
    }

    /// Uniformly random permutation of `0..len` (Fisher-Yates driven by the
    /// stream's counters).
    pub fn permutation(&self, len: usize) -> Vec<u32> {
        let mut perm: Vec<u32> = (0..len as u32).collect();
        for i in (1..len).rev() {
            let j = self.below(i as u64, i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        perm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_reproduce_streams() {
        let a = GaussianSampler::new(42).fork(7);
        let b = GaussianSampler::new(42).fork(7);
        for i in 0..1000 {
            assert_eq!(a.normal(i).to_bits(), b.normal(i).to_bits());
        }
    }

    #[test]
    fn forks_and_seeds_differ() {
        let root = GaussianSampler::new(1);
        assert_ne!(root.fork(1).word(0), root.fork(2).word(0));
        assert_ne!(GaussianSampler::new(1).word(0), GaussianSampler::new(2).word(0));
        assert_ne!(root.fork_named("x").word(0), root.fork_named("p").word(0));
    }

    #[test]
    fn normal_moments() {
        let s = GaussianSampler::new(3);
        let n = 200_000u64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..n {
            let z = s.normal(i);
            m1 += z;
            m2 += z * z;
        }
        let mean = m1 / n as f64;
        let var = m2 / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        // sd of the variance estimator is sqrt(2/n)
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn uniform_stays_open() {
        let s = GaussianSampler::new(0);
        for i in 0..10_000 {
            let u = s.uniform(i);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let p = GaussianSampler::new(9).permutation(1000);
        let mut seen = vec![false; 1000];
        for &i in &p {
            assert!(!seen[i as usize]);
            seen[i as usize] = true;
        }
        assert_ne!(p, (0..1000).collect::<Vec<u32>>());
    }

    #[test]
    fn bits_are_balanced() {
        let s = GaussianSampler::new(11);
        let ones = (0..100_000).filter(|&i| s.bit(i)).count() as f64;
        assert!((ones - 50_000.0).abs() < 5.0 * 158.2);
    }
}
