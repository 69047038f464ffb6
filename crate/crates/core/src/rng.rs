//! Per-event random streams.
//!
//! Every event draws from its own ChaCha8 stream keyed by (seed, event index), so results do
//! not depend on how events are split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIGITIZER_SALT: u64 = 0x6469_6769_7469_7a65;

/// Stream for transport of event `index`.
pub fn event_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream for digitizing event `index`, independent of its transport stream.
pub fn digitizer_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DIGITIZER_SALT);
    rng.set_stream(index);
    rng
}
