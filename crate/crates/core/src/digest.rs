//! Fixed 64-bit and hex digests used for state keys and artifact stamping.

use alloc::string::String;
use core::fmt::Write;

use sha2::{Digest, Sha256};

/// First eight bytes of SHA-256, big-endian.
pub fn digest64(bytes: &[u8]) -> u64 {
    let full = Sha256::digest(bytes);
    let mut head = [0u8; 8];
    head.copy_from_slice(&full[..8]);
    u64::from_be_bytes(head)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in full.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(digest64(b"abc"), 0xba78_16bf_8f01_cfea);
    }
}
