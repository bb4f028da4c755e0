//! Counter-based random streams keyed by `(master seed, replication, purpose)`.
//!
//! Every stream is a ChaCha20 keystream: the key comes from the master seed
//! and the 64-bit stream id from the replication and purpose, so replication
//! 37 draws the same numbers whether it runs first, last or alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const RNG_NAME: &str = "chacha20/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Stream = 0,
    Sr = 1,
    Srf = 2,
    Label = 3,
}

const PURPOSE_SLOTS: u64 = 16;

pub fn derive_rng(master: u64, replication: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(replication.wrapping_mul(PURPOSE_SLOTS).wrapping_add(purpose as u64));
    rng
}

/// A 64-bit label identifying a replication's streams in manifests.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    derive_rng(master, replication, Purpose::Label).next_u64()
}
