//! Hierarchical, order-independent seeding.
//!
//! Every random stream in the engine is a ChaCha8 generator (`rand_chacha`,
//! 8-round ChaCha with the reference stream layout) seeded from a 64-bit value
//! derived by hashing a parent seed with a child index. Derivation uses the
//! SplitMix64 finalizer, which is a bijection on `u64`, so for a fixed parent
//! every index maps to a distinct child and for a fixed index every parent
//! maps to a distinct child.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child `index` under `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent.wrapping_add(mix64(index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN))))
}

/// Seed of branch `branch_index` under the run's master seed.
pub fn branch_seed(master_seed: u64, branch_index: usize) -> u64 {
    derive_seed(master_seed, branch_index as u64)
}

/// Named sub-streams of a branch or run seed. Each purpose gets its own child
/// index so that streams never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weights,
    Kmeans,
    Consensus,
    Elbow,
    Noise,
}

impl Stream {
    fn tag(self) -> u64 {
        // Far from small integers so they never collide with branch indices
        // used directly under the same parent.
        match self {
            Stream::Weights => 0xA000_0000_0000_0001,
            Stream::Kmeans => 0xA000_0000_0000_0002,
            Stream::Consensus => 0xA000_0000_0000_0003,
            Stream::Elbow => 0xA000_0000_0000_0004,
            Stream::Noise => 0xA000_0000_0000_0005,
        }
    }
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(self) -> u64 {
        self.seed
    }

    pub fn child(self, index: u64) -> SeedTree {
        SeedTree::new(derive_seed(self.seed, index))
    }

    pub fn branch(self, index: usize) -> SeedTree {
        SeedTree::new(branch_seed(self.seed, index))
    }

    pub fn stream(self, stream: Stream) -> SeedTree {
        self.child(stream.tag())
    }

    pub fn rng(self) -> ChaCha8Rng {
        make_rng(self.seed)
    }
}

pub fn make_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from {-1, 0, +1} by rejection on 32-bit words (2^32 ≡ 1 mod 3,
/// so only `u32::MAX` is rejected).
pub fn ternary<R: RngCore>(rng: &mut R) -> f64 {
    loop {
        let w = rng.next_u32();
        if w != u32::MAX {
            return (w % 3) as f64 - 1.0;
        }
    }
}

/// `count` i.i.d. uniform ternary weights from a generator seeded with `seed`.
pub fn sample_ternary_weights(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = make_rng(seed);
    (0..count).map(|_| ternary(&mut rng)).collect()
}
