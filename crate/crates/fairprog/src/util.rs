//! Small deterministic helpers shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Stable across platforms; used for config hashes and
/// schema fingerprints, not for security.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hex digest of [`fnv1a_64`], 16 chars.
pub fn stable_hash_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a_64(bytes))
}

/// Derive an independent sub-seed from a base seed and a role tag.
///
/// Every random component (data shuffling, each network's init, probes, ...)
/// draws from its own stream so that enabling or disabling one component
/// never perturbs the others.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a_64(tag.as_bytes()))
}

/// Seeded RNG for a named component.
pub fn component_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, tag))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
