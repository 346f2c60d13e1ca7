//! Seed expansion.
//!
//! A single 64-bit run seed is split into independent ChaCha streams, one per
//! consumer, so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids reserved for the top-level consumers. Oracle batches use
/// `ORACLE_BASE + (fixture << 32) + batch`.
pub const MOMENTS_AVERAGE: u64 = 1;
pub const MOMENTS_WORST_CASE: u64 = 2;
pub const ORACLE_BASE: u64 = 1 << 40;

/// Generator for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for batch `batch` of oracle fixture `fixture`.
pub fn oracle_batch(seed: u64, fixture: u64, batch: u64) -> ChaCha8Rng {
    stream(seed, ORACLE_BASE + (fixture << 32) + batch)
}
