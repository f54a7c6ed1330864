//! Deterministic per-sample random streams.
//!
//! Every `(seed, level, sample index)` triple owns an independent ChaCha8
//! stream: the key is derived from `(seed, level)` and the ChaCha stream id is
//! the sample index. Results therefore do not depend on how samples are
//! distributed over workers.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stats::inv_cdf_unchecked;

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key material for all samples of one `(seed, level)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn new(seed: u64, level: u32) -> Self {
        Self::with_domain(seed, u64::from(level))
    }

    /// Key for an arbitrary domain tag; used by validation suites that must
    /// not share streams with level estimators.
    pub fn with_domain(seed: u64, domain: u64) -> Self {
        let mut state = seed ^ domain.wrapping_mul(0xd6e8_feb8_6659_fd93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self(key)
    }

    pub fn stream(&self, sample: u64) -> SampleStream {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(sample);
        SampleStream { rng }
    }
}

/// Random stream of one sample.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    /// Rewinds onto another sample's stream under the same key.
    pub fn reset(&mut self, sample: u64) {
        self.rng.set_stream(sample);
        self.rng.set_word_pos(0);
    }

    /// Uniform on the open interval (0, 1); exact zeros are rejected.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = (self.rng.next_u64() >> 11) as f64 * UNIT;
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal by inversion of [`uniform_open`](Self::uniform_open).
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        inv_cdf_unchecked(self.uniform_open())
    }
}
