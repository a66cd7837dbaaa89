//! Counter-based random streams.
//!
//! A stream is identified by a master seed plus a path of indices
//! (for example `[replication, draw]`). The key is hashed into a ChaCha8
//! seed, so every stream can be created independently and in any order.
//! Parallel batches that key their work items by index therefore produce
//! the same numbers as a sequential loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator handed out for every derived stream.
pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path: Vec<u64>,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn with_path(master_seed: u64, path: &[u64]) -> Self {
        StreamKey {
            master_seed,
            path: path.to_vec(),
        }
    }

    /// Extends the path by one index.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        StreamKey {
            master_seed: self.master_seed,
            path,
        }
    }

    /// A 64-bit digest of the key, usable as the master seed of a nested
    /// family of streams.
    pub fn digest(&self) -> u64 {
        let mut state = mix(self.master_seed ^ 0x6a09_e667_f3bc_c908);
        for (pos, &index) in self.path.iter().enumerate() {
            state = mix(state ^ mix(index.wrapping_add(GOLDEN.wrapping_mul(pos as u64 + 1))));
        }
        mix(state ^ (self.path.len() as u64).wrapping_mul(0xd1b5_4a32_d192_ed03))
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `key`.
pub fn derive_stream(key: &StreamKey) -> Stream {
    let mut state = key.digest();
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Shorthand for `derive_stream(&StreamKey::with_path(seed, path))`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    derive_stream(&StreamKey::with_path(seed, path))
}

/// Shorthand for a nested master seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    StreamKey::with_path(seed, path).digest()
}
