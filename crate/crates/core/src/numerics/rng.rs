//! Seedable, splittable random number generation.
//!
//! `RngState` is a thin wrapper around a counter-based ChaCha8 stream
//! cipher RNG. A `(seed, stream)` pair fully determines the draw sequence,
//! and distinct streams have disjoint keystreams by construction, so
//! splitting never perturbs the parent's subsequent draws. Concurrency is
//! achieved only by splitting; a state is never shared.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a bijection on `u64` used to scatter child
/// stream ids across the stream space.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    children_spawned: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    /// Root state for a seed, on stream 0.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// State for an explicit `(seed, stream)` pair.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState {
            seed,
            stream,
            children_spawned: 0,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derive an independent child state.
    ///
    /// The child gets a fresh stream id hashed from the parent's stream and
    /// a per-parent spawn counter. Distinct stream ids give disjoint ChaCha
    /// keystreams, so the child's draws are disjoint from the parent's.
    pub fn split(&mut self) -> RngState {
        self.children_spawned += 1;
        let child_stream = splitmix64(self.stream ^ splitmix64(self.children_spawned));
        debug_assert_ne!(child_stream, self.stream);
        RngState::with_stream(self.seed, child_stream)
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn unit_uniform(&mut self) -> f64 {
        rand::Rng::gen::<f64>(self)
    }
}

impl RngCore for RngState {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    #[inline]
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}
