//! Stream layout for the seeded ChaCha generators.
//!
//! A single `u64` seed drives everything a replication does. Independent
//! consumers draw from distinct ChaCha streams of that seed so that, for
//! instance, the annealer never replays the error draws of the simulator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Error draws for simulated paths.
pub const SIMULATION_STREAM: u64 = 0;
/// Random starting matrices (`random_mixed`).
pub const START_STREAM: u64 = 1;
/// Annealing restart `r` uses stream `ANNEAL_STREAM_BASE + r`.
pub const ANNEAL_STREAM_BASE: u64 = 1 << 16;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
