//! Self-contained session files.
//!
//! Layout: one header line of JSON (`format`, `format_version`,
//! `integrity_hash`), a newline, then the session as JSON. The hash is the
//! hex SHA-256 of the payload bytes, so any edit to the payload is caught.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::InterfaceError;
use crate::workflow::Session;

pub const FORMAT_NAME: &str = "thematic-session";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    integrity_hash: String,
}

pub fn save_string(session: &Session) -> Result<String, InterfaceError> {
    let payload = serde_json::to_string(session).map_err(|e| InterfaceError::Malformed(e.to_string()))?;
    let header = Header {
        format: FORMAT_NAME.into(),
        format_version: FORMAT_VERSION,
        integrity_hash: hex::encode(Sha256::digest(payload.as_bytes())),
    };
    let header = serde_json::to_string(&header).map_err(|e| InterfaceError::Malformed(e.to_string()))?;
    Ok(format!("{header}\n{payload}\n"))
}

pub fn load_str(text: &str) -> Result<Session, InterfaceError> {
    let (head, payload) = text
        .split_once('\n')
        .ok_or_else(|| InterfaceError::Malformed("missing header line".into()))?;
    let header: Header =
        serde_json::from_str(head).map_err(|e| InterfaceError::Malformed(format!("header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(InterfaceError::Malformed(format!("not a session file: {}", header.format)));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(InterfaceError::UnsupportedVersion(header.format_version));
    }
    let payload = payload.strip_suffix('\n').unwrap_or(payload);
    if hex::encode(Sha256::digest(payload.as_bytes())) != header.integrity_hash {
        return Err(InterfaceError::HashMismatch);
    }
    serde_json::from_str(payload).map_err(|e| InterfaceError::Malformed(e.to_string()))
}

/// Writes atomically: a sibling temp file is renamed over the target.
pub fn save(session: &Session, path: &Path) -> Result<(), InterfaceError> {
    let text = save_string(session)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Session, InterfaceError> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| InterfaceError::Malformed(e.to_string()))?;
    load_str(&text)
}
