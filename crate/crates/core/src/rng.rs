//! Replica random streams.
//!
//! ChaCha is a counter-based generator: the 64-bit seed selects the key,
//! the replica index selects the stream, and the event index is the
//! position within that stream. Replicas therefore never share draws and
//! any replica can be regenerated alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

pub fn replica_rng(seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}
