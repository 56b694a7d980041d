//! Counter-style seeded streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(seed, key...)`, so a draw never depends on how many draws happened
//! elsewhere before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `seed` addressed by `keys`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut id = 0x9e37_79b9_7f4a_7c15u64;
    for &k in keys {
        id = mix(id ^ mix(k.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
