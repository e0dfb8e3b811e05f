//! The policy enforcement point.
//!
//! [`Gate`] owns the loaded policy snapshot, credentials, sessions,
//! pending registrations, the decision engine, the audit log, and alert
//! dispatch, and exposes one method per endpoint. The HTTP layer in
//! [`http`] is a thin translation onto these methods, so tests and
//! embedders can drive the full request flow without a socket.
//!
//! Responses never reveal whether a tenant or user exists beyond the
//! uniform error contract: all registration failures look alike, and an
//! unknown user fails login byte-identically to a wrong password.

pub mod config;
pub mod http;

use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::alert::{
    default_alert_log_path, read_alert_log, sinks_from_store, AlertActor, AlertDetail, AlertKind,
    AlertDispatcher, AlertRecord,
};
use crate::authn::{
    self, AuthnConfig, AuthnError, CredentialTable, PendingRegistry, Session, SessionManager,
};
use crate::engine::{
    AccessDecision, Engine, EngineError, ReasonCode, TaskInstance, Verdict, ACCESS_ENDPOINT,
    ACTIVATE_ENDPOINT, COMPLETE_ENDPOINT, DELEGATE_ENDPOINT,
};
use crate::model::{
    validate_policy, InstanceId, LocationId, ObjectId, Permission, PolicyStore, TaskId, TenantId,
    UserId,
};
use crate::persist::{
    load_credentials, load_instances, load_policy, save_credentials, save_instances, AuditActor,
    AuditLog, AuditRecord, AuditVerdict, PersistError,
};
use crate::time::{Clock, Timestamp};

pub use config::{GateConfig, LocationConfig, LocationMode};

pub const REGISTER_ENDPOINT: &str = "/v1/register";
pub const PASSWORD_ENDPOINT: &str = "/v1/password";
pub const LOGIN_ENDPOINT: &str = "/v1/login";
pub const ALERTS_ENDPOINT: &str = "/v1/alerts";

// ---------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub tenant: String,
    pub name: String,
    pub designation: String,
    pub employee_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub registration_token: String,
    pub user: UserId,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PasswordRequest {
    pub registration_token: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PasswordResponse {
    pub tenant: TenantId,
    pub user: UserId,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    pub tenant: String,
    pub user: String,
    pub password: String,
    #[serde(default)]
    pub location: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivateRequest {
    pub task: String,
    #[serde(default)]
    pub process_instance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessRequest {
    pub instance: String,
    pub operation: String,
    pub object: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteRequest {
    pub instance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelegateRequest {
    pub instance: String,
    pub to_user: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlertsResponse {
    pub alerts: Vec<AlertRecord>,
}

/// Error contract: `error` is the response class, `reason` the specific
/// code. Bodies for a given class and reason are constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    pub reason: String,
}

impl ApiError {
    pub fn malformed(reason: impl Into<String>) -> Self {
        ApiError {
            status: 400,
            error: "malformed-request".into(),
            reason: reason.into(),
        }
    }

    pub fn bad_credentials(reason: impl Into<String>) -> Self {
        ApiError {
            status: 401,
            error: "bad-credentials".into(),
            reason: reason.into(),
        }
    }

    pub fn access_denied(reason: impl Into<String>) -> Self {
        ApiError {
            status: 403,
            error: "access-denied".into(),
            reason: reason.into(),
        }
    }

    pub fn not_found(reason: impl Into<String>) -> Self {
        ApiError {
            status: 404,
            error: "not-found".into(),
            reason: reason.into(),
        }
    }

    pub fn internal(reason: impl Into<String>) -> Self {
        ApiError {
            status: 500,
            error: "internal-error".into(),
            reason: reason.into(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.error, self.status, self.reason)
    }
}

impl std::error::Error for ApiError {}

// ---------------------------------------------------------------------
// Gate
// ---------------------------------------------------------------------

pub struct Gate {
    config: GateConfig,
    authn_config: AuthnConfig,
    store: PolicyStore,
    credentials: RwLock<CredentialTable>,
    pendings: PendingRegistry,
    sessions: SessionManager,
    engine: Engine,
    alerts: AlertDispatcher,
    audit: AuditLog,
    clock: Arc<dyn Clock>,
}

impl Gate {
    /// Assemble a gate over an already-loaded policy store. Credentials
    /// and instance state are picked up from the data directory when
    /// present.
    pub fn new(
        config: GateConfig,
        store: PolicyStore,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, PersistError> {
        let diagnostics = validate_policy(&store);
        if !diagnostics.is_empty() {
            return Err(PersistError::ValidationFailed(diagnostics));
        }
        let credentials = load_credentials(config.credentials_path())?;
        let engine = Engine::from_state(load_instances(config.instances_path())?);
        let alerts = AlertDispatcher::new(sinks_from_store(&store, &config.data_dir));
        let audit = AuditLog::new(config.audit_path());
        Ok(Gate {
            authn_config: config.authn(),
            config,
            store,
            credentials: RwLock::new(credentials),
            pendings: PendingRegistry::new(),
            sessions: SessionManager::new(),
            engine,
            alerts,
            audit,
            clock,
        })
    }

    /// Load the policy from the configured path and assemble the gate.
    pub fn open(config: GateConfig, clock: Arc<dyn Clock>) -> Result<Self, PersistError> {
        let store = load_policy(config.policy_path())?;
        Gate::new(config, store, clock)
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    pub fn store(&self) -> &PolicyStore {
        &self.store
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Write credentials and instance state out; called on shutdown and
    /// available to embedders.
    pub fn persist(&self) -> Result<(), PersistError> {
        save_credentials(&self.credentials.read(), self.config.credentials_path())?;
        save_instances(&self.engine.snapshot(), self.config.instances_path())
    }

    /// Block until every alert raised so far is delivered; test hooks and
    /// the alerts endpoint use this for read-your-writes.
    pub fn flush_alerts(&self) {
        self.alerts.flush();
    }

    pub fn alert_delivery_failures(&self) -> u64 {
        self.alerts.failure_count()
    }

    fn record_audit(
        &self,
        actor: AuditActor,
        endpoint: &str,
        verdict: AuditVerdict,
        reason: impl Into<String>,
        instance: Option<InstanceId>,
        permission: Option<&Permission>,
    ) {
        let record = AuditRecord {
            timestamp: self.now(),
            actor,
            endpoint: endpoint.to_string(),
            verdict,
            reason: reason.into(),
            instance,
            operation: permission.map(|p| p.operation.clone()),
            object: permission.map(|p| p.object.clone()),
        };
        if let Err(err) = self.audit.append(record) {
            tracing::warn!(error = %err, "audit append failed");
        }
    }

    fn raise_alert(
        &self,
        tenant: &TenantId,
        kind: AlertKind,
        actor: AlertActor,
        reason: &str,
        endpoint: &str,
    ) {
        self.alerts.dispatch(AlertRecord {
            tenant: tenant.clone(),
            kind,
            actor,
            detail: AlertDetail {
                reason: reason.to_string(),
                endpoint: endpoint.to_string(),
            },
            timestamp: self.now(),
        });
    }

    // -----------------------------------------------------------------
    // Registration and login (steps a-d)
    // -----------------------------------------------------------------

    /// `POST /v1/register` — directory-checked registration. Failures are
    /// uniform on the wire; the claimed tenant (when real) gets an
    /// unauthorized-attempt alert, and unknown tenants land in the audit
    /// log only.
    pub fn register(&self, req: RegisterRequest) -> Result<RegisterResponse, ApiError> {
        let now = self.now();
        self.pendings.reap(now);
        let claimed_actor = AuditActor {
            tenant: None,
            user: None,
        };
        let Ok(tenant) = TenantId::new(req.tenant.as_str()) else {
            self.record_audit(
                claimed_actor,
                REGISTER_ENDPOINT,
                AuditVerdict::Error,
                "malformed-tenant",
                None,
                None,
            );
            return Err(ApiError::malformed("invalid tenant id"));
        };
        match authn::register_user(
            &self.store,
            &self.credentials.read(),
            &self.pendings,
            &tenant,
            &req.name,
            &req.designation,
            &req.employee_id,
            now,
            &self.authn_config,
        ) {
            Ok(pending) => {
                self.record_audit(
                    AuditActor {
                        tenant: Some(tenant),
                        user: Some(pending.user.clone()),
                    },
                    REGISTER_ENDPOINT,
                    AuditVerdict::Ok,
                    "ok",
                    None,
                    None,
                );
                Ok(RegisterResponse {
                    registration_token: pending.token,
                    user: pending.user,
                    expires_at: pending.expires_at,
                })
            }
            Err(err) => {
                self.record_audit(
                    AuditActor {
                        tenant: self.store.tenants.contains_key(&tenant).then_some(tenant.clone()),
                        user: None,
                    },
                    REGISTER_ENDPOINT,
                    AuditVerdict::Error,
                    err.code(),
                    None,
                    None,
                );
                if err != AuthnError::UnknownTenant {
                    self.raise_alert(
                        &tenant,
                        AlertKind::UnauthorizedAttempt,
                        AlertActor {
                            user: None,
                            name: Some(req.name.clone()),
                            employee_id: Some(req.employee_id.clone()),
                        },
                        err.code(),
                        REGISTER_ENDPOINT,
                    );
                }
                Err(ApiError::access_denied("registration-rejected"))
            }
        }
    }

    /// `POST /v1/password` — consume a pending registration and activate
    /// the account.
    pub fn password(&self, req: PasswordRequest) -> Result<PasswordResponse, ApiError> {
        let now = self.now();
        let outcome = {
            let mut credentials = self.credentials.write();
            authn::set_password(
                &mut credentials,
                &self.pendings,
                &req.registration_token,
                &req.password,
                now,
                &self.authn_config,
            )
        };
        match outcome {
            Ok(record) => {
                let tenant = self
                    .store
                    .all_users()
                    .find(|u| u.id == record.user)
                    .map(|u| u.tenant.clone());
                let tenant = tenant.ok_or_else(|| ApiError::internal("tenant vanished"))?;
                self.record_audit(
                    AuditActor {
                        tenant: Some(tenant.clone()),
                        user: Some(record.user.clone()),
                    },
                    PASSWORD_ENDPOINT,
                    AuditVerdict::Ok,
                    "ok",
                    None,
                    None,
                );
                if let Err(err) =
                    save_credentials(&self.credentials.read(), self.config.credentials_path())
                {
                    tracing::warn!(error = %err, "credential persistence failed");
                }
                Ok(PasswordResponse {
                    tenant,
                    user: record.user,
                    status: "active".to_string(),
                })
            }
            Err(err) => {
                self.record_audit(
                    AuditActor::default(),
                    PASSWORD_ENDPOINT,
                    AuditVerdict::Error,
                    err.code(),
                    None,
                    None,
                );
                Err(match err {
                    AuthnError::WeakPassword { min_len } => {
                        ApiError::malformed(format!("weak-password: minimum {min_len} characters"))
                    }
                    AuthnError::AlreadyRegistered => ApiError::access_denied("already-registered"),
                    _ => ApiError::access_denied("pending-expired"),
                })
            }
        }
    }

    /// `POST /v1/login` — password check and session issuance. Unknown
    /// users and wrong passwords produce byte-identical errors.
    pub fn login(
        &self,
        req: LoginRequest,
        peer: Option<std::net::IpAddr>,
    ) -> Result<Session, ApiError> {
        let now = self.now();
        self.sessions.reap(now);
        let Ok(tenant) = TenantId::new(req.tenant.as_str()) else {
            return Err(ApiError::malformed("invalid tenant id"));
        };
        let Ok(user) = UserId::new(req.user.as_str()) else {
            return Err(ApiError::malformed("invalid user id"));
        };
        let declared = match req.location.as_deref().map(LocationId::new).transpose() {
            Ok(declared) => declared,
            Err(_) => return Err(ApiError::malformed("invalid location id")),
        };
        let location = self.config.location.observe(declared.as_ref(), peer);

        match authn::authenticate(
            &self.store,
            &self.credentials.read(),
            &self.sessions,
            &tenant,
            &user,
            &req.password,
            location,
            now,
            &self.authn_config,
        ) {
            Ok(session) => {
                self.record_audit(
                    AuditActor {
                        tenant: Some(tenant),
                        user: Some(user),
                    },
                    LOGIN_ENDPOINT,
                    AuditVerdict::Ok,
                    "ok",
                    None,
                    None,
                );
                Ok(session)
            }
            Err(err) => {
                self.record_audit(
                    AuditActor {
                        tenant: self.store.tenants.contains_key(&tenant).then_some(tenant.clone()),
                        user: Some(user.clone()),
                    },
                    LOGIN_ENDPOINT,
                    AuditVerdict::Error,
                    err.code(),
                    None,
                    None,
                );
                if err != AuthnError::UnknownTenant {
                    self.raise_alert(
                        &tenant,
                        AlertKind::UnauthorizedAttempt,
                        AlertActor::user(&user),
                        err.code(),
                        LOGIN_ENDPOINT,
                    );
                }
                Err(match err {
                    AuthnError::AccountNotActivated => {
                        ApiError::bad_credentials("account-not-activated")
                    }
                    // Unknown tenant, unknown user, wrong password: one body.
                    _ => ApiError::bad_credentials("bad-credentials"),
                })
            }
        }
    }

    // -----------------------------------------------------------------
    // Session plumbing
    // -----------------------------------------------------------------

    /// Resolve a bearer token into a live session. Expired-but-known
    /// tokens alert their tenant; unknown tokens can only be audited.
    fn resolve_session(&self, token: Option<&str>, endpoint: &str) -> Result<Session, ApiError> {
        let now = self.now();
        let Some(token) = token else {
            self.record_audit(
                AuditActor::default(),
                endpoint,
                AuditVerdict::Error,
                "session-required",
                None,
                None,
            );
            return Err(ApiError::bad_credentials("session-required"));
        };
        let Some(session) = self.sessions.resolve(token) else {
            self.record_audit(
                AuditActor::default(),
                endpoint,
                AuditVerdict::Error,
                "session-expired",
                None,
                None,
            );
            return Err(ApiError::bad_credentials("session-expired"));
        };
        if !session.is_valid(now) {
            self.record_audit(
                AuditActor {
                    tenant: Some(session.tenant.clone()),
                    user: Some(session.user.clone()),
                },
                endpoint,
                AuditVerdict::Error,
                "session-expired",
                None,
                None,
            );
            self.raise_alert(
                &session.tenant,
                AlertKind::UnauthorizedAttempt,
                AlertActor::user(&session.user),
                "session-expired",
                endpoint,
            );
            return Err(ApiError::bad_credentials("session-expired"));
        }
        Ok(session)
    }

    fn session_actor(session: &Session) -> AuditActor {
        AuditActor {
            tenant: Some(session.tenant.clone()),
            user: Some(session.user.clone()),
        }
    }

    fn engine_failure(
        &self,
        session: &Session,
        endpoint: &str,
        err: EngineError,
        instance: Option<InstanceId>,
        permission: Option<&Permission>,
    ) -> ApiError {
        match err {
            EngineError::Denied { reason, alert } => {
                self.alerts.dispatch(*alert);
                self.record_audit(
                    Self::session_actor(session),
                    endpoint,
                    AuditVerdict::Deny,
                    reason.as_str(),
                    instance,
                    permission,
                );
                if reason == ReasonCode::SessionExpired {
                    ApiError::bad_credentials("session-expired")
                } else {
                    ApiError::access_denied(reason.as_str())
                }
            }
            EngineError::UnknownInstance(id) => {
                self.record_audit(
                    Self::session_actor(session),
                    endpoint,
                    AuditVerdict::Error,
                    "unknown-instance",
                    Some(id),
                    permission,
                );
                ApiError::not_found("unknown-instance")
            }
        }
    }

    // -----------------------------------------------------------------
    // Task endpoints (steps e-f)
    // -----------------------------------------------------------------

    /// `POST /v1/tasks/activate`.
    pub fn activate(
        &self,
        token: Option<&str>,
        req: ActivateRequest,
    ) -> Result<TaskInstance, ApiError> {
        let session = self.resolve_session(token, ACTIVATE_ENDPOINT)?;
        let Ok(task) = TaskId::new(req.task.as_str()) else {
            return Err(ApiError::malformed("invalid task id"));
        };
        match self.engine.activate_task(
            &self.store,
            &session,
            &task,
            req.process_instance.as_deref(),
            self.now(),
        ) {
            Ok(instance) => {
                self.record_audit(
                    Self::session_actor(&session),
                    ACTIVATE_ENDPOINT,
                    AuditVerdict::Ok,
                    "ok",
                    Some(instance.id.clone()),
                    None,
                );
                Ok(instance)
            }
            Err(err) => Err(self.engine_failure(&session, ACTIVATE_ENDPOINT, err, None, None)),
        }
    }

    /// `POST /v1/access` — the authorization step proper. A permit
    /// returns the decision; a deny returns the error contract and
    /// leaves one alert with the tenant.
    pub fn access(
        &self,
        token: Option<&str>,
        req: AccessRequest,
    ) -> Result<AccessDecision, ApiError> {
        let session = self.resolve_session(token, ACCESS_ENDPOINT)?;
        let Ok(instance) = InstanceId::new(req.instance.as_str()) else {
            return Err(ApiError::malformed("invalid instance id"));
        };
        let Ok(object) = ObjectId::new(req.object.as_str()) else {
            return Err(ApiError::malformed("invalid object id"));
        };
        let permission = Permission::new(req.operation, object);
        match self
            .engine
            .check_access(&self.store, &session, &instance, &permission, self.now())
        {
            Ok(decision) => {
                for alert in &decision.alerts_emitted {
                    self.alerts.dispatch(alert.clone());
                }
                let verdict = match decision.verdict {
                    Verdict::Permit => AuditVerdict::Permit,
                    Verdict::Deny => AuditVerdict::Deny,
                };
                self.record_audit(
                    Self::session_actor(&session),
                    ACCESS_ENDPOINT,
                    verdict,
                    decision.reason.as_str(),
                    Some(instance),
                    Some(&permission),
                );
                match decision.verdict {
                    Verdict::Permit => Ok(decision),
                    Verdict::Deny if decision.reason == ReasonCode::SessionExpired => {
                        Err(ApiError::bad_credentials("session-expired"))
                    }
                    Verdict::Deny => Err(ApiError::access_denied(decision.reason.as_str())),
                }
            }
            Err(err) => Err(self.engine_failure(
                &session,
                ACCESS_ENDPOINT,
                err,
                Some(instance),
                Some(&permission),
            )),
        }
    }

    /// `POST /v1/tasks/complete`.
    pub fn complete(
        &self,
        token: Option<&str>,
        req: CompleteRequest,
    ) -> Result<TaskInstance, ApiError> {
        let session = self.resolve_session(token, COMPLETE_ENDPOINT)?;
        let Ok(instance) = InstanceId::new(req.instance.as_str()) else {
            return Err(ApiError::malformed("invalid instance id"));
        };
        match self
            .engine
            .complete_task(&self.store, &session, &instance, self.now())
        {
            Ok(done) => {
                self.record_audit(
                    Self::session_actor(&session),
                    COMPLETE_ENDPOINT,
                    AuditVerdict::Ok,
                    "ok",
                    Some(done.id.clone()),
                    None,
                );
                Ok(done)
            }
            Err(err) => {
                Err(self.engine_failure(&session, COMPLETE_ENDPOINT, err, Some(instance), None))
            }
        }
    }

    /// `POST /v1/tasks/delegate`.
    pub fn delegate(
        &self,
        token: Option<&str>,
        req: DelegateRequest,
    ) -> Result<TaskInstance, ApiError> {
        let session = self.resolve_session(token, DELEGATE_ENDPOINT)?;
        let Ok(instance) = InstanceId::new(req.instance.as_str()) else {
            return Err(ApiError::malformed("invalid instance id"));
        };
        let Ok(to_user) = UserId::new(req.to_user.as_str()) else {
            return Err(ApiError::malformed("invalid user id"));
        };
        match self
            .engine
            .delegate_task(&self.store, &session, &instance, &to_user, self.now())
        {
            Ok(updated) => {
                self.record_audit(
                    Self::session_actor(&session),
                    DELEGATE_ENDPOINT,
                    AuditVerdict::Ok,
                    "ok",
                    Some(updated.id.clone()),
                    None,
                );
                Ok(updated)
            }
            Err(err) => {
                Err(self.engine_failure(&session, DELEGATE_ENDPOINT, err, Some(instance), None))
            }
        }
    }

    /// `GET /v1/alerts` — tenant-admin scoped view of the tenant's alert
    /// log.
    pub fn alerts(&self, token: Option<&str>) -> Result<AlertsResponse, ApiError> {
        let session = self.resolve_session(token, ALERTS_ENDPOINT)?;
        let admin_ok = self
            .config
            .admin_roles
            .get(&session.tenant)
            .is_some_and(|role| session.active_roles.contains(role));
        if !admin_ok {
            self.record_audit(
                Self::session_actor(&session),
                ALERTS_ENDPOINT,
                AuditVerdict::Deny,
                "not-admin",
                None,
                None,
            );
            self.raise_alert(
                &session.tenant,
                AlertKind::MaliciousInsider,
                AlertActor::user(&session.user),
                "not-admin",
                ALERTS_ENDPOINT,
            );
            return Err(ApiError::access_denied("not-admin"));
        }
        self.alerts.flush();
        let path = self.tenant_alert_log(&session.tenant);
        let alerts = read_alert_log(&path)
            .map_err(|err| ApiError::internal(format!("alert log unreadable: {err}")))?;
        self.record_audit(
            Self::session_actor(&session),
            ALERTS_ENDPOINT,
            AuditVerdict::Ok,
            "ok",
            None,
            None,
        );
        Ok(AlertsResponse { alerts })
    }

    /// Path of a tenant's alert log, honoring its sink override.
    pub fn tenant_alert_log(&self, tenant: &TenantId) -> PathBuf {
        match self
            .store
            .tenants
            .get(tenant)
            .and_then(|t| t.alert_sink.file.as_ref())
        {
            Some(custom) => self.config.data_dir.join(custom),
            None => default_alert_log_path(&self.config.data_dir, tenant),
        }
    }
}
