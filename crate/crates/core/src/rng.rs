//! Deterministic per-sample RNG substreams.
//!
//! Every sampler in the crate draws from a [`SampleStream`]: a global seed
//! plus a sample index. The RNG state for index `i` is a pure function of
//! `(seed, i)`, so parallel workers drawing disjoint index ranges can never
//! collide and the same `(seed, i)` pair always reproduces the same series.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A handle on the global seed with a cursor over sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStream {
    seed: u64,
    next_index: u64,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        SampleStream {
            seed,
            next_index: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Restore a stream at a given cursor (checkpoint resume).
    pub fn at(seed: u64, next_index: u64) -> Self {
        SampleStream { seed, next_index }
    }

    /// The RNG for sample `index`. ChaCha streams keyed by the index are
    /// statistically independent, so distinct indices never share state.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Take the next sample index and return its RNG.
    pub fn next_rng(&mut self) -> (u64, ChaCha8Rng) {
        let idx = self.next_index;
        self.next_index += 1;
        (idx, self.rng_for(idx))
    }

    /// A derived stream for a named sub-purpose (e.g. "eval", "heldout") so
    /// auxiliary draws never overlap training sample indices.
    pub fn derive(&self, tag: &str) -> SampleStream {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tag.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        SampleStream {
            seed: self.seed ^ h,
            next_index: 0,
        }
    }
}
