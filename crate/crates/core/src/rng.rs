//! Deterministic, splittable random streams.
//!
//! Every random draw in the crate flows from a single `u64` seed through a
//! counter-based key derivation: a stream is identified by `(seed, domain,
//! counter)` and two distinct keys yield independent ChaCha streams. Replicas,
//! per-step noise and data generation therefore reproduce bit-for-bit
//! regardless of execution order (replicas may run on any number of threads).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Keeping these disjoint guarantees that e.g. the index
/// stream never overlaps the noise stream of the same step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Init,
    Noise,
    Index,
    Minibatch,
    Data,
    Replica,
    Probe,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Init => 0x01,
            Domain::Noise => 0x02,
            Domain::Index => 0x03,
            Domain::Minibatch => 0x04,
            Domain::Data => 0x05,
            Domain::Replica => 0x06,
            Domain::Probe => 0x07,
        }
    }
}

/// SplitMix64 finalizer; a well-mixed 64-bit permutation.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the key for stream `(seed, domain, counter)`.
pub fn derive_key(seed: u64, domain: Domain, counter: u64) -> u64 {
    mix64(seed ^ mix64(domain.tag() ^ mix64(counter)))
}

/// A fresh deterministic generator for the given stream.
pub fn stream(seed: u64, domain: Domain, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, domain, counter))
}

/// Seed for replica `r` derived from a base seed.
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    derive_key(seed, Domain::Replica, replica)
}
