//! Seed derivation.
//!
//! Every run has one root seed. Independent streams are derived from it by
//! hashing `(root, label, index)` with SplitMix64, so the number of draws made
//! by one component (say, the planner) never shifts the draws seen by another
//! (say, the demand process).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Labels for the independent streams used inside one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Instance = 1,
    Truth = 2,
    Environment = 3,
    Agent = 4,
    Planner = 5,
    Belief = 6,
    Queries = 7,
    Subsample = 8,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; the map is a bijection-mix of all three inputs.
pub fn derive_seed(root: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(root ^ splitmix64(stream as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn stream_rng(root: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, stream, index))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Order-sensitive 64-bit mixing of a sequence of words. Used for state and
/// history digests.
#[derive(Debug, Clone, Copy)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Digest(0x243F_6A88_85A3_08D3)
    }
}

impl Digest {
    pub fn new(seed: u64) -> Self {
        Digest(splitmix64(seed))
    }

    #[inline]
    pub fn push(mut self, word: u64) -> Self {
        self.0 = splitmix64(self.0 ^ word.wrapping_mul(0x9FB2_1C65_1E98_DF25));
        self
    }

    pub fn push_f64(self, x: f64) -> Self {
        self.push(x.to_bits())
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}
