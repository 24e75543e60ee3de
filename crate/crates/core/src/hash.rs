//! FNV-1a hashing for version tokens and deterministic sub-seeding.
//! Stable across processes and platforms, unlike the std hasher.

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives a child RNG seed from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    fnv1a64(label.as_bytes()) ^ master.rotate_left(17)
}
