//! Deterministic seed derivation.
//!
//! Every stochastic stage takes its own seed derived from one master seed, so a
//! single `--seed` reproduces a whole run.

/// FNV-1a over the master seed bytes followed by the stage name.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in master.to_le_bytes().iter().chain(name.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(hash)
}

/// Seed for the `index`-th cell of a family (folds, sweep cells).
pub fn derive_indexed(master: u64, name: &str, index: usize) -> u64 {
    splitmix(derive_seed(master, name) ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
