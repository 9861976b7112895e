//! Per-worker random number streams.
//!
//! Each worker owns two ChaCha12 generators. The *common* stream is keyed
//! only by master seed and chain, so every core of a chain's group draws
//! the identical sequence; it drives the cooperative updates that all
//! cores replay in lockstep. The *specific* stream additionally keys on
//! the core rank and drives the updates a core performs alone.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const COMMON: u64 = 0;
const SPECIFIC: u64 = 1;

fn seed_bytes(master_seed: u64, chain: u64, stream: u64, rank: u64) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&master_seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&chain.to_le_bytes());
    bytes[16..24].copy_from_slice(&stream.to_le_bytes());
    bytes[24..32].copy_from_slice(&rank.to_le_bytes());
    bytes
}

/// The pair of generators owned by one worker.
pub struct RngStreams {
    pub common: ChaCha12Rng,
    pub specific: ChaCha12Rng,
}

impl RngStreams {
    pub fn for_worker(master_seed: u64, chain: u32, rank: u32) -> RngStreams {
        RngStreams {
            common: ChaCha12Rng::from_seed(seed_bytes(master_seed, chain as u64, COMMON, 0)),
            // rank + 1 keeps the specific key space disjoint from the
            // rank-independent common key
            specific: ChaCha12Rng::from_seed(seed_bytes(
                master_seed,
                chain as u64,
                SPECIFIC,
                rank as u64 + 1,
            )),
        }
    }
}
