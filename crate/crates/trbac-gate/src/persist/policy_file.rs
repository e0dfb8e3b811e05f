//! Policy document storage. A loaded store always passes validation;
//! an invalid file never yields a usable store.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{atomic_write_json, load_versioned, PersistError};
use crate::model::{validate_policy, PolicyStore};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub format_version: u32,
    pub store: PolicyStore,
}

/// Load and validate a policy store. Validation failures carry the full
/// diagnostic list.
pub fn load_policy(path: impl AsRef<Path>) -> Result<PolicyStore, PersistError> {
    let doc: PolicyDocument = load_versioned(path.as_ref(), POLICY_FORMAT_VERSION)?;
    let diagnostics = validate_policy(&doc.store);
    if !diagnostics.is_empty() {
        return Err(PersistError::ValidationFailed(diagnostics));
    }
    Ok(doc.store)
}

/// Validate and save a policy store atomically. Refuses invalid stores;
/// a crash mid-save leaves the previous file intact.
pub fn save_policy(store: &PolicyStore, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let diagnostics = validate_policy(store);
    if !diagnostics.is_empty() {
        return Err(PersistError::ValidationFailed(diagnostics));
    }
    atomic_write_json(
        path.as_ref(),
        &PolicyDocument {
            format_version: POLICY_FORMAT_VERSION,
            store: store.clone(),
        },
    )
}
