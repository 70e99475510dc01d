use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Reproducible random stream: ChaCha8 keyed by `seed_from_u64(master_seed)` with the
/// ChaCha stream id set to `stream_index`.
///
/// All draws are built from `next_u64`:
/// * [`uniform_index`](Self::uniform_index) uses rejection on the low zone
///   `[0, 2^64 mod n)`, so every index has probability exactly `1/n`;
/// * [`uniform_unit`](Self::uniform_unit) takes the top 53 bits, giving a value in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_index);
        Self { master_seed, stream_index, inner }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `0..n`. Panics if `n == 0`.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index over an empty range");
        let bound = n as u64;
        let zone = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= zone {
                return (x % bound) as usize;
            }
        }
    }

    pub fn uniform_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform_unit() < p
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniformly random permutation of `0..n` by Fisher–Yates.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.uniform_index(i + 1);
            p.swap(i, j);
        }
        p
    }
}
