//! Canonical JSON and content digests.
//!
//! "Canonical" here means: object keys sorted lexicographically, compact
//! separators, UTF-8. Two serializations of equal values are byte-identical,
//! so digests of configs are stable across struct field order and writers.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Serialize any value to canonical JSON (sorted keys, compact).
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // Round-tripping through `serde_json::Value` sorts object keys: the
    // default `Value` object is a BTreeMap.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Digest of a value's canonical JSON form.
pub fn config_digest<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(canonical_json(value)?.as_bytes()))
}
