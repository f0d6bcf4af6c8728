//! Seeded, labelled RNG streams.
//!
//! Every source of randomness in a run is a ChaCha12 stream derived from the
//! run seed plus a fixed stream label, so replays are byte-identical and the
//! two players never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream label for the row player.
pub const ROW_STREAM: u64 = 1;
/// Stream label for the column player.
pub const COL_STREAM: u64 = 2;

/// Build the RNG for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
