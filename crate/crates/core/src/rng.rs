//! Seedable random streams.
//!
//! All randomness in a run derives from one root seed. Each pipeline stage
//! draws from its own named substream so stages can be reproduced in
//! isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator seeded directly from `seed`.
pub fn from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream `name` under the root seed.
pub fn substream(root: u64, name: &str) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(root);
    rng.set_stream(fnv1a64(name.as_bytes()));
    rng
}

/// Stream for item `index` of the named stage.
pub fn item_stream(root: u64, name: &str, index: u64) -> Rng {
    let mut key = name.as_bytes().to_vec();
    key.extend_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha20Rng::seed_from_u64(root);
    rng.set_stream(fnv1a64(&key));
    rng
}
