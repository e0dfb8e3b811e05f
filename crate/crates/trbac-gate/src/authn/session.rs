//! Sessions map an authenticated user to the roles and location the
//! engine will decide against.

use std::collections::{BTreeMap, BTreeSet};

use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::model::{LocationId, RoleId, TenantId, UserId};
use crate::time::Timestamp;

/// An authenticated principal's active context. `active_roles` is always
/// a subset of the user's effective role set (login activates all of
/// them).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user: UserId,
    pub tenant: TenantId,
    pub active_roles: BTreeSet<RoleId>,
    pub location: LocationId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl Session {
    pub fn is_valid(&self, now: Timestamp) -> bool {
        now < self.expires_at
    }
}

/// 256-bit random bearer token, hex encoded.
pub fn fresh_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// In-memory session table. Expired sessions stay resolvable until
/// reaped so replays can be attributed to their tenant.
#[derive(Debug, Default)]
pub struct SessionManager {
    sessions: RwLock<BTreeMap<String, Session>>,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue(
        &self,
        user: UserId,
        tenant: TenantId,
        active_roles: BTreeSet<RoleId>,
        location: LocationId,
        now: Timestamp,
        ttl_millis: u64,
    ) -> Session {
        let session = Session {
            token: fresh_token(),
            user,
            tenant,
            active_roles,
            location,
            issued_at: now,
            expires_at: now.plus_millis(ttl_millis.max(1)),
        };
        self.sessions
            .write()
            .insert(session.token.clone(), session.clone());
        session
    }

    /// Look up by token, expired or not; validity is the caller's check.
    pub fn resolve(&self, token: &str) -> Option<Session> {
        self.sessions.read().get(token).cloned()
    }

    /// Drop sessions expired at `now`; returns how many were removed.
    pub fn reap(&self, now: Timestamp) -> usize {
        let mut sessions = self.sessions.write();
        let before = sessions.len();
        sessions.retain(|_, s| s.is_valid(now));
        before - sessions.len()
    }
}
