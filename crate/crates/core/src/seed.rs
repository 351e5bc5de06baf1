//! Deterministic seed derivation.
//!
//! Every source of randomness in the pipeline is a [`ChaCha8Rng`] derived
//! from a single root seed and a stable stage label, so runs are
//! reproducible and stages can be re-executed independently.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix a root seed with a stage label into a 64-bit subseed.
///
/// Uses an FNV-1a pass over the label followed by splitmix64 finalization.
/// This is a fixed algorithm, not tied to `std` hasher internals, so derived
/// seeds stay stable across toolchain versions.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET ^ root;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// RNG for one named stage of the pipeline.
pub fn stage_rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
