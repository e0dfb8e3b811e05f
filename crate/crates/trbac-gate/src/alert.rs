//! Per-tenant alerting.
//!
//! Every denied request produces one [`AlertRecord`] for the tenant it
//! concerns: failures before authentication are unauthorized attempts,
//! denials of an authenticated user are flagged as a possible malicious
//! insider. Records are delivered to the tenant's sinks by a background
//! dispatcher; delivery never blocks or alters the access decision.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::model::{PolicyStore, TenantId, UserId};
use crate::persist::PersistError;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertKind {
    /// Unauthenticated failure: bad registration, bad login, stale
    /// session replay.
    UnauthorizedAttempt,
    /// An authenticated user denied at the task/access layer.
    MaliciousInsider,
}

/// Claimed identity fields of the actor behind an alert.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertActor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub employee_id: Option<String>,
}

impl AlertActor {
    pub fn user(user: &UserId) -> Self {
        AlertActor {
            user: Some(user.clone()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertDetail {
    /// Deny reason or error code.
    pub reason: String,
    /// Endpoint or engine operation where the denial happened.
    pub endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub tenant: TenantId,
    pub kind: AlertKind,
    pub actor: AlertActor,
    pub detail: AlertDetail,
    pub timestamp: Timestamp,
}

/// A delivery channel for one tenant's alerts.
pub trait AlertSink: Send {
    fn deliver(&mut self, record: &AlertRecord) -> Result<(), PersistError>;
}

/// Appends alerts to a JSON-lines log file — the default sink and the
/// system of record behind `GET /v1/alerts`.
#[derive(Debug)]
pub struct FileAlertSink {
    path: PathBuf,
}

impl FileAlertSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileAlertSink { path: path.into() }
    }
}

impl AlertSink for FileAlertSink {
    fn deliver(&mut self, record: &AlertRecord) -> Result<(), PersistError> {
        crate::persist::append_json_line(&self.path, record)
    }
}

/// Outbound mail stub: formats each alert as a message appended to an
/// outbox file. Stands in for an SMTP client; the gateway treats it as
/// fire and forget.
#[derive(Debug)]
pub struct MailAlertSink {
    address: String,
    outbox: PathBuf,
}

impl MailAlertSink {
    pub fn new(address: impl Into<String>, outbox: impl Into<PathBuf>) -> Self {
        MailAlertSink {
            address: address.into(),
            outbox: outbox.into(),
        }
    }
}

impl AlertSink for MailAlertSink {
    fn deliver(&mut self, record: &AlertRecord) -> Result<(), PersistError> {
        let kind = match record.kind {
            AlertKind::UnauthorizedAttempt => "unauthorized attempt",
            AlertKind::MaliciousInsider => "malicious insider",
        };
        let message = serde_json::json!({
            "to": self.address,
            "subject": format!("[trbac-gate] {kind} alert for tenant {}", record.tenant),
            "body": record,
        });
        crate::persist::append_json_line(&self.outbox, &message)
    }
}

/// Default alert log path for a tenant under the data directory. Safe to
/// join because tenant ids cannot contain path separators.
pub fn default_alert_log_path(data_dir: &Path, tenant: &TenantId) -> PathBuf {
    data_dir.join("alerts").join(format!("{tenant}.log"))
}

/// Build each tenant's sink set from its policy descriptor.
pub fn sinks_from_store(
    store: &PolicyStore,
    data_dir: &Path,
) -> BTreeMap<TenantId, Vec<Box<dyn AlertSink>>> {
    let mut sinks: BTreeMap<TenantId, Vec<Box<dyn AlertSink>>> = BTreeMap::new();
    for (tenant_id, tenant) in &store.tenants {
        let mut tenant_sinks: Vec<Box<dyn AlertSink>> = Vec::new();
        let log_path = match &tenant.alert_sink.file {
            Some(custom) => data_dir.join(custom),
            None => default_alert_log_path(data_dir, tenant_id),
        };
        tenant_sinks.push(Box::new(FileAlertSink::new(log_path)));
        if let Some(address) = &tenant.alert_sink.mail {
            tenant_sinks.push(Box::new(MailAlertSink::new(
                address.clone(),
                data_dir.join("outbox.log"),
            )));
        }
        sinks.insert(tenant_id.clone(), tenant_sinks);
    }
    sinks
}

/// Read a tenant's alert log back.
pub fn read_alert_log(path: impl AsRef<Path>) -> Result<Vec<AlertRecord>, PersistError> {
    crate::persist::read_json_lines(path.as_ref())
}

enum DispatchMessage {
    Record(AlertRecord),
    Flush(mpsc::SyncSender<()>),
    Shutdown,
}

/// Background alert delivery, asynchronous with respect to the request
/// path but strictly ordered (one worker, FIFO per tenant). A failing
/// sink is retried once, then counted and skipped.
pub struct AlertDispatcher {
    sender: mpsc::Sender<DispatchMessage>,
    worker: Option<JoinHandle<()>>,
    failures: Arc<AtomicU64>,
}

impl AlertDispatcher {
    pub fn new(mut sinks: BTreeMap<TenantId, Vec<Box<dyn AlertSink>>>) -> Self {
        let (sender, receiver) = mpsc::channel::<DispatchMessage>();
        let failures = Arc::new(AtomicU64::new(0));
        let failure_count = failures.clone();
        let worker = std::thread::Builder::new()
            .name("alert-dispatch".to_string())
            .spawn(move || {
                while let Ok(message) = receiver.recv() {
                    match message {
                        DispatchMessage::Record(record) => {
                            let Some(tenant_sinks) = sinks.get_mut(&record.tenant) else {
                                failure_count.fetch_add(1, Ordering::SeqCst);
                                continue;
                            };
                            for sink in tenant_sinks {
                                let delivered = sink
                                    .deliver(&record)
                                    .or_else(|_| sink.deliver(&record));
                                if let Err(err) = delivered {
                                    failure_count.fetch_add(1, Ordering::SeqCst);
                                    tracing::warn!(
                                        tenant = %record.tenant,
                                        error = %err,
                                        "alert delivery failed"
                                    );
                                }
                            }
                        }
                        DispatchMessage::Flush(ack) => {
                            let _ = ack.send(());
                        }
                        DispatchMessage::Shutdown => break,
                    }
                }
            })
            .expect("spawn alert dispatcher");
        AlertDispatcher {
            sender,
            worker: Some(worker),
            failures,
        }
    }

    /// Enqueue a record; never fails and never blocks on sink IO.
    pub fn dispatch(&self, record: AlertRecord) {
        let _ = self.sender.send(DispatchMessage::Record(record));
    }

    /// Wait until everything enqueued so far has been delivered.
    pub fn flush(&self) {
        let (ack, done) = mpsc::sync_channel(1);
        if self.sender.send(DispatchMessage::Flush(ack)).is_ok() {
            let _ = done.recv();
        }
    }

    /// Deliveries that failed after retry (including unroutable tenants).
    pub fn failure_count(&self) -> u64 {
        self.failures.load(Ordering::SeqCst)
    }
}

impl Drop for AlertDispatcher {
    fn drop(&mut self) {
        let _ = self.sender.send(DispatchMessage::Shutdown);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}
