//! Deterministic stream derivation.
//!
//! Every random decision draws from a ChaCha stream keyed on the master seed,
//! a purpose tag and up to two integer coordinates, so results do not depend
//! on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_WALK: u64 = 0x5741_4c4b;
pub const TAG_COUNTS: u64 = 0x434e_5453;
pub const TAG_MATRIX: u64 = 0x4d41_5458;
pub const TAG_PARTITION: u64 = 0x5041_5254;
pub const TAG_GENERATOR: u64 = 0x4745_4e52;
pub const TAG_SAMPLE: u64 = 0x534d_504c;
pub const TAG_MACHINE: u64 = 0x4d41_4348;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ tag);
    h = splitmix(h ^ a);
    splitmix(h ^ b.rotate_left(17))
}

pub fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag, a, b))
}
