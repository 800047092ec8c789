//! Named random substreams derived from one root seed.
//!
//! Every consumer of randomness asks for its own stream by label, so adding
//! an estimator or a perturbation never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the substream `label` indexed by `parts` under `root`.
pub fn derive_seed(root: u64, label: &str, parts: &[u64]) -> u64 {
    // FNV-1a over the label, then mix in each part.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut s = splitmix64(root ^ h);
    for &p in parts {
        s = splitmix64(s ^ p);
    }
    s
}

pub fn substream(root: u64, label: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, parts))
}
