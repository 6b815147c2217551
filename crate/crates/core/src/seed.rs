//! Derivation of independent sub-seeds from one master seed.
//!
//! `derive_seed(master, module, purpose)` is the first eight bytes, read
//! little-endian, of `SHA-256(master.to_le_bytes() ‖ module ‖ 0x00 ‖ purpose)`.

use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, module: &str, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(module.as_bytes());
    h.update([0u8]);
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
