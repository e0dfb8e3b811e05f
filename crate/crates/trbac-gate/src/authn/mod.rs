//! Authentication: directory-checked registration, password credentials,
//! and session issuance.
//!
//! The error surface is deliberately uniform where it faces untrusted
//! callers: an unknown user and a wrong password both fail with
//! [`AuthnError::BadCredentials`], and both cost one hash verification so
//! neither the error nor its latency enumerates users.

mod password;
mod registration;
mod session;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    resolve_effective_roles, LocationId, PolicyStore, TenantId, UserId,
};
use crate::time::Timestamp;

pub use password::{
    burn_verification, hash_password, CredentialRecord, ALGORITHM_TAG, DEFAULT_ITERATIONS,
    SALT_LEN,
};
pub use registration::{PendingRegistration, PendingRegistry};
pub use session::{fresh_token, Session, SessionManager};

/// Defaults: 100k hash iterations, 8-character floor, 10-minute pending
/// lifetime, 30-minute sessions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthnConfig {
    pub hash_iterations: u32,
    pub min_password_len: usize,
    pub pending_ttl_millis: u64,
    pub session_ttl_millis: u64,
}

impl Default for AuthnConfig {
    fn default() -> Self {
        AuthnConfig {
            hash_iterations: DEFAULT_ITERATIONS,
            min_password_len: 8,
            pending_ttl_millis: 10 * 60 * 1_000,
            session_ttl_millis: 30 * 60 * 1_000,
        }
    }
}

/// Credential records keyed by tenant, then user — persisted separately
/// from the policy store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialTable {
    pub records: BTreeMap<TenantId, BTreeMap<UserId, CredentialRecord>>,
}

impl CredentialTable {
    pub fn get(&self, tenant: &TenantId, user: &UserId) -> Option<&CredentialRecord> {
        self.records.get(tenant).and_then(|m| m.get(user))
    }

    pub fn contains(&self, tenant: &TenantId, user: &UserId) -> bool {
        self.get(tenant, user).is_some()
    }

    pub fn insert(&mut self, tenant: TenantId, record: CredentialRecord) {
        self.records
            .entry(tenant)
            .or_default()
            .insert(record.user.clone(), record);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthnError {
    #[error("unknown tenant")]
    UnknownTenant,
    #[error("name and employee id do not match the tenant directory")]
    DirectoryMismatch,
    #[error("directory entry has no provisioned user record")]
    NotProvisioned,
    #[error("account already registered")]
    AlreadyRegistered,
    #[error("password shorter than {min_len} characters")]
    WeakPassword { min_len: usize },
    #[error("registration token expired or already used")]
    PendingExpired,
    #[error("bad credentials")]
    BadCredentials,
    #[error("account not activated")]
    AccountNotActivated,
}

impl AuthnError {
    /// Stable wire/audit code.
    pub fn code(&self) -> &'static str {
        match self {
            AuthnError::UnknownTenant => "unknown-tenant",
            AuthnError::DirectoryMismatch => "directory-mismatch",
            AuthnError::NotProvisioned => "not-provisioned",
            AuthnError::AlreadyRegistered => "already-registered",
            AuthnError::WeakPassword { .. } => "weak-password",
            AuthnError::PendingExpired => "pending-expired",
            AuthnError::BadCredentials => "bad-credentials",
            AuthnError::AccountNotActivated => "account-not-activated",
        }
    }
}

/// Check a registration request against the tenant directory and open a
/// pending registration on success. No state changes on failure.
pub fn register_user(
    store: &PolicyStore,
    credentials: &CredentialTable,
    pendings: &PendingRegistry,
    tenant: &TenantId,
    name: &str,
    designation: &str,
    employee_id: &str,
    now: Timestamp,
    config: &AuthnConfig,
) -> Result<PendingRegistration, AuthnError> {
    let tenant_rec = store.tenants.get(tenant).ok_or(AuthnError::UnknownTenant)?;
    let entry = tenant_rec
        .directory
        .get(employee_id)
        .ok_or(AuthnError::DirectoryMismatch)?;
    if entry.name != name {
        return Err(AuthnError::DirectoryMismatch);
    }
    let user = store
        .user_by_employee_id(tenant, employee_id)
        .ok_or(AuthnError::NotProvisioned)?;
    if credentials.contains(tenant, &user.id) {
        return Err(AuthnError::AlreadyRegistered);
    }
    Ok(pendings.create(
        tenant.clone(),
        user.id.clone(),
        employee_id.to_string(),
        name.to_string(),
        designation.to_string(),
        now,
        config.pending_ttl_millis,
    ))
}

/// Consume a pending registration and store the credential, activating
/// the account. A weak password leaves the pending usable for a retry;
/// success and `AlreadyRegistered` both consume it.
pub fn set_password(
    credentials: &mut CredentialTable,
    pendings: &PendingRegistry,
    token: &str,
    password: &str,
    now: Timestamp,
    config: &AuthnConfig,
) -> Result<CredentialRecord, AuthnError> {
    let pending = pendings.peek(token).ok_or(AuthnError::PendingExpired)?;
    if pending.is_expired(now) {
        pendings.take(token);
        return Err(AuthnError::PendingExpired);
    }
    if password.chars().count() < config.min_password_len {
        return Err(AuthnError::WeakPassword {
            min_len: config.min_password_len,
        });
    }
    // Point of consumption: exactly one registration wins per user.
    let pending = pendings.take(token).ok_or(AuthnError::PendingExpired)?;
    if credentials.contains(&pending.tenant, &pending.user) {
        return Err(AuthnError::AlreadyRegistered);
    }
    let record =
        CredentialRecord::create(pending.user.clone(), password, config.hash_iterations);
    credentials.insert(pending.tenant, record.clone());
    Ok(record)
}

/// Verify a password and issue a session whose active roles default to
/// the user's full effective role set.
///
/// Every failure path performs one hash-verification's worth of work.
#[allow(clippy::too_many_arguments)]
pub fn authenticate(
    store: &PolicyStore,
    credentials: &CredentialTable,
    sessions: &SessionManager,
    tenant: &TenantId,
    user: &UserId,
    password: &str,
    location: LocationId,
    now: Timestamp,
    config: &AuthnConfig,
) -> Result<Session, AuthnError> {
    if !store.tenants.contains_key(tenant) {
        burn_verification(password, config.hash_iterations);
        return Err(AuthnError::UnknownTenant);
    }
    if store.user(tenant, user).is_none() {
        burn_verification(password, config.hash_iterations);
        return Err(AuthnError::BadCredentials);
    }
    let Some(record) = credentials.get(tenant, user) else {
        burn_verification(password, config.hash_iterations);
        return Err(AuthnError::AccountNotActivated);
    };
    if !record.verify(password) {
        return Err(AuthnError::BadCredentials);
    }
    let active_roles = resolve_effective_roles(store, tenant, user)
        .map_err(|_| AuthnError::BadCredentials)?;
    Ok(sessions.issue(
        user.clone(),
        tenant.clone(),
        active_roles,
        location,
        now,
        config.session_ttl_millis,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{lid, tid, uid};
    use crate::model::StoreBuilder;

    fn test_config() -> AuthnConfig {
        AuthnConfig {
            hash_iterations: 32,
            ..AuthnConfig::default()
        }
    }

    fn acme_store() -> PolicyStore {
        StoreBuilder::new("acme")
            .task("t1", 3)
            .role("clerk", &["t1"])
            .role_with_juniors("manager", &["clerk"], &[])
            .user_with_employee("ada", "E42", "Ada", &["manager"])
            .build()
    }

    struct Fixture {
        store: PolicyStore,
        credentials: CredentialTable,
        pendings: PendingRegistry,
        sessions: SessionManager,
        config: AuthnConfig,
        now: Timestamp,
    }

    impl Fixture {
        fn new() -> Self {
            Fixture {
                store: acme_store(),
                credentials: CredentialTable::default(),
                pendings: PendingRegistry::new(),
                sessions: SessionManager::new(),
                config: test_config(),
                now: Timestamp(1_000_000),
            }
        }

        fn register_ada(&mut self) -> PendingRegistration {
            register_user(
                &self.store,
                &self.credentials,
                &self.pendings,
                &tid("acme"),
                "Ada",
                "engineer",
                "E42",
                self.now,
                &self.config,
            )
            .unwrap()
        }

        fn activate_ada(&mut self, password: &str) -> CredentialRecord {
            let pending = self.register_ada();
            set_password(
                &mut self.credentials,
                &self.pendings,
                &pending.token,
                password,
                self.now,
                &self.config,
            )
            .unwrap()
        }

        fn login(&self, user: &str, password: &str) -> Result<Session, AuthnError> {
            authenticate(
                &self.store,
                &self.credentials,
                &self.sessions,
                &tid("acme"),
                &uid(user),
                password,
                lid("hq"),
                self.now,
                &self.config,
            )
        }
    }

    #[test]
    fn matching_directory_entry_yields_pending() {
        let mut fx = Fixture::new();
        let pending = fx.register_ada();
        assert_eq!(pending.user, uid("ada"));
        assert_eq!(pending.tenant, tid("acme"));
        assert!(pending.expires_at > pending.issued_at);
    }

    #[test]
    fn unknown_employee_is_directory_mismatch() {
        let fx = Fixture::new();
        let err = register_user(
            &fx.store,
            &fx.credentials,
            &fx.pendings,
            &tid("acme"),
            "Mallory",
            "intruder",
            "E99",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::DirectoryMismatch);
    }

    #[test]
    fn wrong_name_for_right_employee_id_is_directory_mismatch() {
        let fx = Fixture::new();
        let err = register_user(
            &fx.store,
            &fx.credentials,
            &fx.pendings,
            &tid("acme"),
            "Mallory",
            "engineer",
            "E42",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::DirectoryMismatch);
    }

    #[test]
    fn unknown_tenant_is_its_own_error() {
        let fx = Fixture::new();
        let err = register_user(
            &fx.store,
            &fx.credentials,
            &fx.pendings,
            &tid("nosuchco"),
            "Ada",
            "engineer",
            "E42",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::UnknownTenant);
    }

    #[test]
    fn password_set_matches_definitional_digest() {
        let mut fx = Fixture::new();
        let record = fx.activate_ada("correct horse battery");
        assert_eq!(
            record.digest,
            hash_password(&record.salt, "correct horse battery", fx.config.hash_iterations)
        );
        assert_eq!(record.algorithm_tag, ALGORITHM_TAG);
        assert!(record.salt.len() >= SALT_LEN);
    }

    #[test]
    fn short_password_is_rejected_and_pending_survives() {
        let mut fx = Fixture::new();
        let pending = fx.register_ada();
        let err = set_password(
            &mut fx.credentials,
            &fx.pendings,
            &pending.token,
            "abc",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::WeakPassword { min_len: 8 });
        // Retry with a strong password still works.
        set_password(
            &mut fx.credentials,
            &fx.pendings,
            &pending.token,
            "long enough now",
            fx.now,
            &fx.config,
        )
        .unwrap();
    }

    #[test]
    fn pending_expires_and_cannot_be_replayed() {
        let mut fx = Fixture::new();
        let pending = fx.register_ada();
        let late = pending.expires_at;
        let err = set_password(
            &mut fx.credentials,
            &fx.pendings,
            &pending.token,
            "long enough now",
            late,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::PendingExpired);

        // Consumed-once: a successful set_password kills the token.
        let pending = fx.register_ada();
        set_password(
            &mut fx.credentials,
            &fx.pendings,
            &pending.token,
            "long enough now",
            fx.now,
            &fx.config,
        )
        .unwrap();
        let err = set_password(
            &mut fx.credentials,
            &fx.pendings,
            &pending.token,
            "long enough now",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::PendingExpired);
    }

    #[test]
    fn duplicate_registrations_exactly_one_wins() {
        let mut fx = Fixture::new();
        let first = fx.register_ada();
        let second = fx.register_ada();
        set_password(
            &mut fx.credentials,
            &fx.pendings,
            &first.token,
            "long enough now",
            fx.now,
            &fx.config,
        )
        .unwrap();
        let err = set_password(
            &mut fx.credentials,
            &fx.pendings,
            &second.token,
            "other password!",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::AlreadyRegistered);
        // Re-registering an activated account fails up front.
        let err = register_user(
            &fx.store,
            &fx.credentials,
            &fx.pendings,
            &tid("acme"),
            "Ada",
            "engineer",
            "E42",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::AlreadyRegistered);
    }

    #[test]
    fn login_round_trip_and_effective_roles() {
        let mut fx = Fixture::new();
        fx.activate_ada("correct horse battery");
        let session = fx.login("ada", "correct horse battery").unwrap();
        // Manager inherits clerk: both are active.
        assert_eq!(
            session.active_roles,
            crate::model::test_support::role_set(&["manager", "clerk"])
        );
        assert_eq!(session.location, lid("hq"));
        assert!(session.is_valid(fx.now));
    }

    #[test]
    fn wrong_password_and_unknown_user_fail_identically() {
        let mut fx = Fixture::new();
        fx.activate_ada("correct horse battery");
        let wrong = fx.login("ada", "wrong password").unwrap_err();
        let unknown = fx.login("nobody", "wrong password").unwrap_err();
        assert_eq!(wrong, AuthnError::BadCredentials);
        assert_eq!(unknown, AuthnError::BadCredentials);
        assert_eq!(wrong.to_string(), unknown.to_string());
        assert_eq!(wrong.code(), unknown.code());
    }

    #[test]
    fn unactivated_account_cannot_login() {
        let fx = Fixture::new();
        let err = fx.login("ada", "whatever pw").unwrap_err();
        assert_eq!(err, AuthnError::AccountNotActivated);
    }

    #[test]
    fn directory_entry_without_user_record_is_not_provisioned() {
        let mut fx = Fixture::new();
        fx.store
            .tenants
            .get_mut(&tid("acme"))
            .unwrap()
            .directory
            .insert(
                "E77".to_string(),
                crate::model::DirectoryEntry {
                    name: "Grace".to_string(),
                    designation: "admiral".to_string(),
                },
            );
        let err = register_user(
            &fx.store,
            &fx.credentials,
            &fx.pendings,
            &tid("acme"),
            "Grace",
            "admiral",
            "E77",
            fx.now,
            &fx.config,
        )
        .unwrap_err();
        assert_eq!(err, AuthnError::NotProvisioned);
    }

    mod properties {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            /// Round trip: authenticate succeeds with the set password and
            /// fails with any other.
            #[test]
            fn password_round_trip(
                password in "[ -~]{8,24}",
                other in "[ -~]{8,24}",
            ) {
                let mut fx = Fixture::new();
                fx.activate_ada(&password);
                prop_assert!(fx.login("ada", &password).is_ok());
                if other != password {
                    prop_assert_eq!(
                        fx.login("ada", &other).unwrap_err(),
                        AuthnError::BadCredentials
                    );
                }
            }

            /// The credential table never contains plaintext bytes. The
            /// alphabet avoids JSON-escaped characters so `contains` is a
            /// faithful scan of the serialized form.
            #[test]
            fn credential_table_never_stores_plaintext(password in "[a-zA-Z0-9 _!#-]{10,24}") {
                let mut fx = Fixture::new();
                fx.activate_ada(&password);
                let serialized = serde_json::to_string(&fx.credentials).unwrap();
                prop_assert!(!serialized.contains(&password));
            }
        }
    }
}
