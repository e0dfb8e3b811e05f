//! File-backed persistence.
//!
//! Layout under the gateway data directory:
//! - `policy.json` — the policy store (canonical, sorted keys).
//! - `credentials.json` — the credential table, deliberately a separate
//!   file from the policy.
//! - `instances.json` — task-instance state and SoD history snapshots.
//! - `audit.log` — append-only JSON-lines access audit.
//! - `alerts/<tenant>.log` — append-only per-tenant alert logs.
//!
//! Documents are replaced atomically (write temp file, rename), so
//! readers see either the old or the new complete document. Logs are
//! line-appended; a torn final line from a crash is tolerated on read.

mod audit_log;
mod credentials_file;
mod instances_file;
mod policy_file;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Diagnostic;

pub use audit_log::{AuditActor, AuditLog, AuditRecord, AuditVerdict, read_audit};
pub use credentials_file::{load_credentials, save_credentials, CREDENTIALS_FORMAT_VERSION};
pub use instances_file::{load_instances, save_instances, INSTANCES_FORMAT_VERSION};
pub use policy_file::{load_policy, save_policy, PolicyDocument, POLICY_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported format_version {found} in {path} (expected {expected})")]
    FormatVersion {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("policy validation failed with {} diagnostic(s)", .0.len())]
    ValidationFailed(Vec<Diagnostic>),
}

impl PersistError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        PersistError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        PersistError::Parse {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// First-pass view of a versioned document; only the version is read.
#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Load a versioned JSON document, rejecting version mismatches outright
/// (no silent migration).
pub(crate) fn load_versioned<T: DeserializeOwned>(
    path: &Path,
    expected_version: u32,
) -> Result<T, PersistError> {
    let raw = fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    let probe: VersionProbe =
        serde_json::from_str(&raw).map_err(|e| PersistError::parse(path, e))?;
    if probe.format_version != expected_version {
        return Err(PersistError::FormatVersion {
            path: path.display().to_string(),
            found: probe.format_version,
            expected: expected_version,
        });
    }
    serde_json::from_str(&raw).map_err(|e| PersistError::parse(path, e))
}

/// Serialize canonically (sorted keys come from the ordered collections)
/// and replace `path` atomically: write a uniquely named temp file in the
/// same directory, then rename over the target.
pub(crate) fn atomic_write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| PersistError::io(path, e))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| PersistError::io(path, e))?;
    let body = serde_json::to_string_pretty(value).map_err(|e| PersistError::parse(path, e))?;
    tmp.write_all(body.as_bytes())
        .and_then(|_| tmp.write_all(b"\n"))
        .and_then(|_| tmp.flush())
        .map_err(|e| PersistError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| PersistError::io(path, e.error))?;
    Ok(())
}

/// Append one JSON line. The file is opened per append; the OS append
/// mode keeps concurrent writers from interleaving within a line.
pub(crate) fn append_json_line<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PersistError::io(path, e))?;
    }
    let mut line = serde_json::to_string(value).map_err(|e| PersistError::parse(path, e))?;
    line.push('\n');
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| PersistError::io(path, e))?;
    file.write_all(line.as_bytes())
        .map_err(|e| PersistError::io(path, e))
}

/// Read every record of a JSON-lines file in order. A missing file reads
/// as empty. A torn final line (no trailing newline, from a crashed
/// writer) is dropped; malformed interior lines are errors.
pub(crate) fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PersistError> {
    let raw = match fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(PersistError::io(path, e)),
    };
    let complete_prefix = match raw.rfind('\n') {
        Some(end) => &raw[..end],
        None => return Ok(Vec::new()),
    };
    let mut records = Vec::new();
    for line in complete_prefix.lines() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| PersistError::parse(path, e))?);
    }
    Ok(records)
}
