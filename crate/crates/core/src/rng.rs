//! Reproducible random stream.
//!
//! The generator is xoshiro256** whose 256-bit state is filled from a
//! splitmix64 sequence started at the user seed. Derived draws are fixed here
//! so that other implementations can reproduce instances bit for bit:
//!
//! * `below(b)`: draw `x = next_u64()` until `x >= 2^64 mod b`, return `x mod b`.
//! * `unit()`: `(next_u64() >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `bernoulli(p)`: `unit() < p`.
//! * `sign()`: `+1` if `below(2) == 0`, else `-1`.
//! * `gaussian()`: Box–Muller cosine branch with `u1 = 1 - unit()`, `u2 = unit()`;
//!   one normal per two uniforms, nothing cached.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: Xoshiro256StarStar,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream for a sub-task (e.g. one search-tree node).
    pub fn derived(seed: u64, stream: u64) -> Self {
        Self::new(splitmix64(
            seed ^ splitmix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        ))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, bound)` by rejection sampling.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }

    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.below(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
