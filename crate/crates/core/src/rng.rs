//! Seed-to-stream mapping.
//!
//! Every random artifact is drawn from a ChaCha8 stream. The 256-bit key is
//! the little-endian campaign seed followed by the little-endian domain tag
//! (remaining bytes zero); the ChaCha stream id is the item index (trial
//! number, slot, ...). ChaCha8 output is platform independent, so a
//! `(seed, domain, index)` triple names the same bits everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep independent uses of one seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Codebook = 1,
    SensingMatrix = 2,
    Trial = 3,
    Generic = 4,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Convenience for tests and one-off draws.
pub fn seeded(seed: u64) -> StreamRng {
    stream(seed, Domain::Generic, 0)
}
