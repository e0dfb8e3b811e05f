//! Task-instance state snapshots.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{atomic_write_json, load_versioned, PersistError};
use crate::engine::EngineState;

pub const INSTANCES_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstancesDocument {
    format_version: u32,
    engine: EngineState,
}

/// Load engine state; a missing file is a clean start.
pub fn load_instances(path: impl AsRef<Path>) -> Result<EngineState, PersistError> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(EngineState::default());
    }
    let doc: InstancesDocument = load_versioned(path, INSTANCES_FORMAT_VERSION)?;
    Ok(doc.engine)
}

pub fn save_instances(state: &EngineState, path: impl AsRef<Path>) -> Result<(), PersistError> {
    atomic_write_json(
        path.as_ref(),
        &InstancesDocument {
            format_version: INSTANCES_FORMAT_VERSION,
            engine: state.clone(),
        },
    )
}
