//! Pinned pseudo-random source.
//!
//! Every stochastic component (stream generation, bootstraps, Poisson
//! weights, weight initialisation, shuffles) draws from [`SeededRng`]. The
//! bit generator is Marsaglia's xorshift128 seeded through `seed_from_u64`,
//! and the derived samplers below are written out explicitly so the streams
//! do not depend on the sampling algorithms of any particular `rand` release.

use rand::{RngCore, SeedableRng};
use rand_xorshift::XorShiftRng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: XorShiftRng,
    spare_gaussian: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: XorShiftRng::seed_from_u64(seed),
            spare_gaussian: None,
        }
    }

    /// Independent child generator, e.g. one per ensemble member.
    pub fn fork(&mut self) -> Self {
        Self::new(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by widening multiply. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal deviate, Marsaglia polar method. Deviates are produced
    /// in pairs; the second one is cached for the next call.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare_gaussian = Some(v * m);
                return u * m;
            }
        }
    }

    /// Poisson deviate by sequential inverse transform.
    ///
    /// Means above [`POISSON_CHUNK`] are split into chunks (a sum of
    /// independent Poisson variables is Poisson) so `exp(-mean)` never
    /// underflows.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        debug_assert!(mean.is_finite() && mean >= 0.0);
        let mut remaining = mean;
        let mut total = 0;
        while remaining > POISSON_CHUNK {
            total += self.poisson_inverse(POISSON_CHUNK);
            remaining -= POISSON_CHUNK;
        }
        total + self.poisson_inverse(remaining)
    }

    fn poisson_inverse(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u >= cdf {
            k += 1;
            p *= mean / k as f64;
            let next = cdf + p;
            if next == cdf {
                // tail mass below f64 resolution
                break;
            }
            cdf = next;
        }
        k
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` (partial Fisher-Yates), in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Largest mean handled by a single inverse-transform pass.
pub const POISSON_CHUNK: f64 = 500.0;
