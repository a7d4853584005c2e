//! Portable pseudo-random number generation.
//!
//! Experiments must replay bit-for-bit on any platform, so the generator is
//! spelled out here instead of borrowed from a crate whose stream may change
//! between releases.
//!
//! * Stream: xoshiro256++ (Blackman & Vigna), 256 bits of state.
//! * Seeding: the four state words are the first four outputs of SplitMix64
//!   started at the seed.
//! * `uniform()`: the top 53 bits of one output scaled by 2^-53, giving a
//!   value in `[0, 1)`.
//! * `below(n)`: Lemire's multiply-shift with rejection, unbiased.
//! * `mix_seed(base, index)`: SplitMix64 finalizer applied to
//!   `base + (index + 1) * 0x9E3779B97F4A7C15`; used to derive per-run and
//!   per-stream seeds from one base seed.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for sub-stream `index` of `base`.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    splitmix_finalize(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Named sub-streams of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Action = 3,
    Replay = 4,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut x = seed;
        let mut s = [0u64; 4];
        for w in &mut s {
            x = x.wrapping_add(GOLDEN_GAMMA);
            *w = splitmix_finalize(x);
        }
        Rng { s }
    }

    /// Generator for one named stream of the run seeded with `seed`.
    pub fn for_stream(seed: u64, stream: Stream) -> Self {
        Rng::new(mix_seed(seed, stream as u64))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }
}
