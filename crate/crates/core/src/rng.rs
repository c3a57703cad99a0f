//! Counter-based random streams.
//!
//! Every consumer of randomness draws from a ChaCha8 stream addressed by
//! `(seed, domain, index)`. Streams for different indices are independent
//! and a stream's content never depends on which other streams were used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags separating the stream families that share one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Block = 1,
    Phase = 2,
    GraphPath = 3,
    SdeX = 4,
    SdeZ = 5,
    Ensemble = 6,
    Bootstrap = 7,
    Shape = 8,
}

const INDEX_BITS: u32 = 56;
const INDEX_MASK: u64 = (1u64 << INDEX_BITS) - 1;

/// The stream for `index` within `domain`. Signed indices (negative block
/// numbers) are accepted through a wrapping cast.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << INDEX_BITS) | (index & INDEX_MASK));
    rng
}

/// Derives a child seed for ensemble member `member`.
pub fn child_seed(seed: u64, member: u64) -> u64 {
    use rand::RngCore;
    stream(seed, Domain::Ensemble, member).next_u64()
}
