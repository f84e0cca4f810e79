//! Deterministic seed derivation.
//!
//! Every randomized stage (synthesis, augmentation, shuffling, dropout,
//! weight init) takes a seed derived from the run seed, a purpose label, and
//! integer indices. The mix is FNV-1a rather than the std hasher so derived
//! seeds never change across compiler or std releases.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_more(FNV_OFFSET, bytes)
}

/// Continue an FNV-1a hash with more bytes.
pub fn fnv1a_more(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive a child seed from a base seed, a purpose label, and indices.
///
/// Distinct labels or indices give unrelated streams; the same triple always
/// gives the same seed.
pub fn derive_seed(base: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = fnv1a_more(FNV_OFFSET, &base.to_le_bytes());
    h = fnv1a_more(h, label.as_bytes());
    for &i in indices {
        h = fnv1a_more(h, &i.to_le_bytes());
    }
    h
}
