//! Counter-based random streams.
//!
//! A draw is a pure function of `(master_seed, stream_id, counter)`: the key
//! is hashed once and the counter is fed through the SplitMix64 finalizer.
//! Evaluation order therefore never affects the values, and everything is
//! integer arithmetic up to the final conversion to `f64`.

use serde::{Deserialize, Serialize};

use super::normal::quantile_unchecked;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    #[inline]
    fn key(&self) -> u64 {
        mix64(self.master_seed ^ mix64(self.stream_id.wrapping_add(GOLDEN_GAMMA)))
    }

    /// Child stream; distinct ids give statistically independent streams.
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            stream_id: mix64(self.stream_id ^ mix64(id.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1))),
        }
    }

    #[inline]
    pub fn bits(&self, counter: u64) -> u64 {
        mix64(self.key().wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&self, counter: u64) -> f64 {
        quantile_unchecked(self.uniform(counter))
    }

    pub fn cursor(&self) -> StreamCursor {
        StreamCursor { key: self.key(), counter: 0 }
    }
}

/// Sequential view of a stream.
#[derive(Debug, Clone)]
pub struct StreamCursor {
    key: u64,
    counter: u64,
}

impl StreamCursor {
    #[inline]
    pub fn next_bits(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_bits() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        quantile_unchecked(self.next_uniform())
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift; bias below 2^-64·n).
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        ((self.next_bits() as u128 * n as u128) >> 64) as usize
    }
}
