//! Per-trial random substreams.
//!
//! Every random quantity is drawn from a stream keyed by `(seed, trial, role)`,
//! so results never depend on how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags keep the streams for different purposes within one trial disjoint.
pub mod role {
    pub const MATRIX: u64 = 0x4d41_5452;
    pub const REFERENCE: u64 = 0x4741_5553;
    pub const ROW: u64 = 0x524f_5721;
    pub const VECTOR: u64 = 0x5645_4354;
    pub const PAIRED: u64 = 0x5041_4952;
    pub const GAUSSIAN_PAIR: u64 = 0x475a_5a5a;
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hash64(seed: u64, trial: u64, role: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let a = mix(seed.wrapping_add(GOLDEN));
    let b = mix(a ^ trial.wrapping_add(GOLDEN.wrapping_mul(2)));
    mix(b ^ role.wrapping_add(GOLDEN.wrapping_mul(3)))
}

pub fn substream(seed: u64, trial: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash64(seed, trial, role))
}
