//! Seeded random streams.
//!
//! Every stochastic component draws from a [`SimRng`] handed to it by the
//! caller. A master seed fans out to named substreams: the substream seed is
//! the first eight bytes (little endian) of `SHA-256(master_le_bytes || name)`.
//! Substreams are therefore stable across platforms, thread counts and
//! releases of this crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The random stream type used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Creates a stream from a raw 64-bit seed.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of the substream called `name` under `master`.
pub fn substream_seed(master: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Opens the substream called `name` under `master`.
pub fn substream(master: u64, name: &str) -> SimRng {
    seeded(substream_seed(master, name))
}
