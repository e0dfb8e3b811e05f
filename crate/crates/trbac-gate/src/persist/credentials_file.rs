//! Credential table storage — a separate file from the policy document,
//! so hashes never travel with policy exports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{atomic_write_json, load_versioned, PersistError};
use crate::authn::CredentialTable;

pub const CREDENTIALS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CredentialsDocument {
    format_version: u32,
    credentials: CredentialTable,
}

/// Load the credential table; a missing file is an empty table (a fresh
/// deployment has no activated accounts).
pub fn load_credentials(path: impl AsRef<Path>) -> Result<CredentialTable, PersistError> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(CredentialTable::default());
    }
    let doc: CredentialsDocument = load_versioned(path, CREDENTIALS_FORMAT_VERSION)?;
    Ok(doc.credentials)
}

pub fn save_credentials(
    table: &CredentialTable,
    path: impl AsRef<Path>,
) -> Result<(), PersistError> {
    atomic_write_json(
        path.as_ref(),
        &CredentialsDocument {
            format_version: CREDENTIALS_FORMAT_VERSION,
            credentials: table.clone(),
        },
    )
}
