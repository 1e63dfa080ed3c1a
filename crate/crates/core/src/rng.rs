// SPDX-License-Identifier: Apache-2.0

//! Reproducible random substreams.
//!
//! Every `(replication, stream)` pair owns its own ChaCha8 keystream: the key
//! is derived from `(master_seed, replication)` by SplitMix64 mixing and the
//! stream index selects the ChaCha stream id. Replications can therefore be
//! run in any order, on any number of threads, and still see the same data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used for all simulated observations.
pub type StreamRng = ChaCha8Rng;

/// Seed-domain tags so that threshold calibration, delay simulation and
/// communication accounting never reuse each other's sample paths.
pub const CALIBRATION_DOMAIN: u64 = 1;
pub const DELAY_DOMAIN: u64 = 2;
pub const COMM_DOMAIN: u64 = 3;
pub const MOMENTS_DOMAIN: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub const fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Derives an unrelated seed family, e.g. to keep calibration and delay
    /// runs from sharing sample paths.
    pub fn domain(&self, tag: u64) -> SeedSpec {
        let mut s = self.master_seed ^ tag.rotate_left(29);
        let _ = splitmix64(&mut s);
        SeedSpec {
            master_seed: splitmix64(&mut s),
        }
    }

    /// The independent substream for stream `k` of replication `rep`.
    pub fn substream(&self, rep: u64, k: u64) -> StreamRng {
        let mut rep_state = rep;
        let mut state = self.master_seed ^ splitmix64(&mut rep_state);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(k);
        rng
    }

    /// One generator per stream for replication `rep`.
    pub fn replication(&self, rep: u64, streams: usize) -> Vec<StreamRng> {
        (0..streams as u64)
            .map(|k| self.substream(rep, k))
            .collect()
    }
}
