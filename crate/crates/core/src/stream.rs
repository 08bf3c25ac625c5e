//! Seeded random streams.
//!
//! Every source of randomness in the simulator hangs off a [`StreamKey`]
//! tree rooted at the master seed. A key is a pure function of its path
//! (`master -> round -> client -> purpose`), so the order in which clients
//! or vector elements are processed never changes the numbers they see.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Concrete generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    pub const fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    /// Derives the key for a labelled child node.
    pub fn child(self, label: u64) -> Self {
        Self(splitmix64(splitmix64(self.0) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
    }

    /// Derives a child from a textual purpose tag ("init", "batch", ...).
    pub fn named(self, tag: &str) -> Self {
        // FNV-1a; only needs to be stable, not strong.
        let h = tag
            .bytes()
            .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x1000_0000_01B3));
        self.child(h)
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Generator for element `index` of a vector: the ChaCha stream number
    /// selects an independent keystream under the same key.
    pub fn indexed_rng(self, index: u64) -> StreamRng {
        let mut rng = self.rng();
        rng.set_stream(index);
        rng
    }
}
