//! Counter-based deterministic RNG.
//!
//! Every consumer owns a `CounterRng` keyed by `(seed, stream)`. Draws are a
//! pure function of the key and an incrementing counter, so per-environment
//! streams produce identical values no matter how many sibling environments
//! exist or how work is sharded across threads.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(seed);
    for t in tags {
        acc = splitmix64(acc ^ t.wrapping_mul(GOLDEN));
    }
    acc
}

/// Stateless counter RNG: `value = f(key, counter)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng {
            key: splitmix64(seed) ^ splitmix64(stream.wrapping_mul(GOLDEN) ^ 0x5851_F42D_4C95_7F2D),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = splitmix64(self.key ^ splitmix64(self.counter));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform in `[0, 1)` with 53 usable bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Symmetric uniform in `[-half, half]`.
    #[inline]
    pub fn jitter(&mut self, half: f64) -> f64 {
        if half == 0.0 {
            // Still consume a draw so downstream streams stay aligned.
            let _ = self.next_u64();
            return 0.0;
        }
        self.range(-half, half)
    }

    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = (self.uniform()).max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            let j = self.index(i + 1);
            v.swap(i, j);
        }
    }
}
