use std::hash::Hasher;

use fnv::FnvHasher;

/// Stable 64-bit FNV-1a over the seed bytes followed by `data`.
pub fn seeded_hash(seed: u64, data: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(data);
    h.finish()
}

/// Uniform value in [0, 1) derived from a stable hash.
pub fn unit_interval(seed: u64, data: &[u8]) -> f64 {
    (seeded_hash(seed, data) >> 11) as f64 / (1u64 << 53) as f64
}
