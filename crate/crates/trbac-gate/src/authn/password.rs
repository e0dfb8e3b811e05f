//! Salted iterated password hashing.
//!
//! The stored digest is SHA-256 applied `iterations` times: the first
//! round hashes `salt || password`, each further round hashes the
//! previous digest. The scheme tag is persisted with every record so the
//! scheme can rotate without invalidating old credentials.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::UserId;

/// Tag of the only scheme currently produced.
pub const ALGORITHM_TAG: &str = "sha256-iter";

/// Default work factor for new credentials.
pub const DEFAULT_ITERATIONS: u32 = 100_000;

pub const SALT_LEN: usize = 16;

/// A stored credential. Never contains plaintext; `salt` and `digest`
/// serialize as hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialRecord {
    pub user: UserId,
    pub algorithm_tag: String,
    #[serde(with = "hex_bytes")]
    pub salt: Vec<u8>,
    pub iterations: u32,
    #[serde(with = "hex_bytes")]
    pub digest: Vec<u8>,
}

impl CredentialRecord {
    /// Hash `password` under a fresh random salt.
    pub fn create(user: UserId, password: &str, iterations: u32) -> Self {
        let mut salt = vec![0u8; SALT_LEN];
        rand::rngs::OsRng.fill_bytes(&mut salt);
        let digest = hash_password(&salt, password, iterations);
        CredentialRecord {
            user,
            algorithm_tag: ALGORITHM_TAG.to_string(),
            salt,
            iterations,
            digest,
        }
    }

    /// Recompute and compare in constant time.
    pub fn verify(&self, password: &str) -> bool {
        if self.algorithm_tag != ALGORITHM_TAG {
            return false;
        }
        let candidate = hash_password(&self.salt, password, self.iterations);
        constant_time_eq(&candidate, &self.digest)
    }
}

pub fn hash_password(salt: &[u8], password: &str, iterations: u32) -> Vec<u8> {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(password.as_bytes());
    let mut digest = hasher.finalize();
    for _ in 1..iterations.max(1) {
        digest = Sha256::digest(&digest);
    }
    digest.to_vec()
}

/// Hash a throwaway credential so rejected logins for unknown users cost
/// the same work as real verifications.
pub fn burn_verification(password: &str, iterations: u32) {
    let digest = hash_password(b"trbac-gate-decoy-salt", password, iterations);
    std::hint::black_box(digest);
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut acc = 0u8;
    for (x, y) in a.iter().zip(b) {
        acc |= x ^ y;
    }
    acc == 0
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let raw = String::deserialize(de)?;
        hex::decode(&raw).map_err(serde::de::Error::custom)
    }
}
