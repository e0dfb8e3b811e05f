//! Two-phase account activation: a registration request is checked
//! against the tenant's employee directory and yields a pending
//! registration; setting a password consumes it and activates the user.
//!
//! User records themselves are provisioned by tenant administration (that
//! is where role assignments come from); registration lets the person
//! behind a directory entry claim their record.

use std::collections::BTreeMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::session::fresh_token;
use crate::model::{TenantId, UserId};
use crate::time::Timestamp;

/// An unconsumed registration awaiting password creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRegistration {
    pub token: String,
    pub tenant: TenantId,
    pub user: UserId,
    pub employee_id: String,
    pub name: String,
    pub designation: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl PendingRegistration {
    pub fn is_expired(&self, now: Timestamp) -> bool {
        now >= self.expires_at
    }
}

/// Server-held pending registrations keyed by registration token.
#[derive(Debug, Default)]
pub struct PendingRegistry {
    pendings: Mutex<BTreeMap<String, PendingRegistration>>,
}

impl PendingRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(
        &self,
        tenant: TenantId,
        user: UserId,
        employee_id: String,
        name: String,
        designation: String,
        now: Timestamp,
        ttl_millis: u64,
    ) -> PendingRegistration {
        let pending = PendingRegistration {
            token: fresh_token(),
            tenant,
            user,
            employee_id,
            name,
            designation,
            issued_at: now,
            expires_at: now.plus_millis(ttl_millis.max(1)),
        };
        self.pendings
            .lock()
            .insert(pending.token.clone(), pending.clone());
        pending
    }

    /// Fetch without consuming (recoverable failures leave the pending
    /// usable for a retry).
    pub fn peek(&self, token: &str) -> Option<PendingRegistration> {
        self.pendings.lock().get(token).cloned()
    }

    /// Consume a pending registration.
    pub fn take(&self, token: &str) -> Option<PendingRegistration> {
        self.pendings.lock().remove(token)
    }

    /// Drop pendings expired at `now`.
    pub fn reap(&self, now: Timestamp) -> usize {
        let mut pendings = self.pendings.lock();
        let before = pendings.len();
        pendings.retain(|_, p| !p.is_expired(now));
        before - pendings.len()
    }
}
