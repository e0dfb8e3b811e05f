//! Append-only access audit log: one JSON line per gateway-visible
//! event, the substrate for least-privilege auditing.

use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{append_json_line, read_json_lines, PersistError};
use crate::model::{InstanceId, ObjectId, TenantId, UserId};
use crate::time::Timestamp;

/// Claimed or authenticated identity behind an audited event.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditActor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenant: Option<TenantId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<UserId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditVerdict {
    /// An access decision permitted the request.
    Permit,
    /// An access decision denied the request.
    Deny,
    /// A non-decision endpoint succeeded.
    Ok,
    /// A non-decision endpoint failed.
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub timestamp: Timestamp,
    pub actor: AuditActor,
    pub endpoint: String,
    pub verdict: AuditVerdict,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceId>,
    /// Operation and object of the checked permission, when the event is
    /// an access check; least-privilege auditing reads these.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectId>,
}

/// Append-only writer enforcing monotone timestamps: a record stamped
/// earlier than its predecessor is bumped up to it.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    last_timestamp: Mutex<Timestamp>,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        AuditLog {
            path: path.into(),
            last_timestamp: Mutex::new(Timestamp(0)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, mut record: AuditRecord) -> Result<(), PersistError> {
        let mut last = self.last_timestamp.lock();
        if record.timestamp < *last {
            record.timestamp = *last;
        }
        *last = record.timestamp;
        append_json_line(&self.path, &record)
    }
}

/// Records with `from <= timestamp < to`, in append order.
pub fn read_audit(
    path: impl AsRef<Path>,
    from: Timestamp,
    to: Timestamp,
) -> Result<Vec<AuditRecord>, PersistError> {
    let records: Vec<AuditRecord> = read_json_lines(path.as_ref())?;
    Ok(records
        .into_iter()
        .filter(|r| r.timestamp >= from && r.timestamp < to)
        .collect())
}
