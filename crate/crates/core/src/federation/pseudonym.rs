//! Keyed pseudonyms for instance ids.
//!
//! The host and guest share a key at setup time; an instance id is
//! referred to on the wire only by its keyed digest. This hides ids from
//! a passive observer without the key. It is a pseudonymization device at
//! desk scale, not a cryptographic identity protocol.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOKEN_LEN: usize = 32;

/// 32-byte keyed digest of an instance id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PseudonymToken([u8; TOKEN_LEN]);

impl PseudonymToken {
    pub fn from_bytes(bytes: [u8; TOKEN_LEN]) -> Self {
        PseudonymToken(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }

    pub fn len(&self) -> usize {
        TOKEN_LEN
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Short hex form for log lines.
    pub fn prefix_hex(&self) -> String {
        self.0[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deterministic keyed digest: SHA-256 over the length-prefixed key
/// followed by the id bytes. The length prefix fixes the key/id boundary
/// so distinct (key, id) pairs never produce the same preimage.
pub fn pseudonymize_id(raw_id: &str, key: &[u8]) -> Result<PseudonymToken> {
    if key.is_empty() {
        return Err(Error::EmptyKey);
    }
    let mut hasher = Sha256::new();
    hasher.update((key.len() as u64).to_be_bytes());
    hasher.update(key);
    hasher.update(raw_id.as_bytes());
    Ok(PseudonymToken(hasher.finalize().into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_key() {
        let a = pseudonymize_id("1234", b"key").unwrap();
        let b = pseudonymize_id("1234", b"key").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_key_changes_token() {
        let a = pseudonymize_id("1234", b"key-one").unwrap();
        let b = pseudonymize_id("1234", b"key-two").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn different_id_changes_token() {
        let a = pseudonymize_id("1234", b"key").unwrap();
        let b = pseudonymize_id("1235", b"key").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn key_id_boundary_is_unambiguous() {
        let a = pseudonymize_id("bc", b"a").unwrap();
        let b = pseudonymize_id("c", b"ab").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn empty_key_is_rejected() {
        assert!(matches!(pseudonymize_id("1", b""), Err(Error::EmptyKey)));
    }
}
