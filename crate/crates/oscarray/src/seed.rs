//! Deterministic seed derivation.
//!
//! All randomness flows from a single top-level seed. Independent tasks (scan
//! rows, drive amplitudes, Monte-Carlo trials) each derive their own stream
//! from `(seed, task label)` so results do not depend on execution order.

use sha2::{Digest, Sha256};

/// Derive a child seed from a parent seed and a task label.
///
/// First eight little-endian bytes of SHA-256(seed_le || label).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_distinct() {
        let a = derive_seed(1, "mri/row/0");
        let b = derive_seed(1, "mri/row/1");
        let c = derive_seed(2, "mri/row/0");
        assert_eq!(a, derive_seed(1, "mri/row/0"));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
