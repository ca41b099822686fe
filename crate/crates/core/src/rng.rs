//! Counter-based deterministic random streams.
//!
//! A stream is identified by `(seed, domain)`; the `k`-th block of
//! [`BLOCK`] draws inside it is produced by a ChaCha8 generator positioned at
//! stream `k`. Filling a large array block by block in parallel therefore gives
//! exactly the same numbers as filling it sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of draws per independently addressable block.
pub const BLOCK: usize = 4096;

/// Independent purposes a seed is used for. Each gets its own key so that,
/// e.g., changing the noise never changes the planted signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Signal = 1,
    Noise = 2,
    AmpInit = 3,
    MonteCarlo = 4,
    Oracle = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for block `block` of the `(seed, domain)` stream.
pub fn block_rng(seed: u64, domain: Domain, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = splitmix64(seed ^ splitmix64(domain as u64));
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    rng
}

/// Generator for a whole stream (block 0); for small sequential draws.
pub fn stream_rng(seed: u64, domain: Domain) -> ChaCha8Rng {
    block_rng(seed, domain, 0)
}

/// Derives a child seed, e.g. one per trial of a Monte Carlo experiment.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA5A5_A5A5)))
}
