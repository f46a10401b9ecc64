use sha2::{Digest, Sha256};

/// 64-bit seed from a label; distinct labels give independent streams and the
/// result never depends on scheduling.
pub fn derive_seed(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}
