//! The policy decision point.
//!
//! Permissions live only inside an active task instance: activation
//! requires a role-task mapping and dynamic separation of duty, each
//! permitted access consumes one use, and at the task's usage limit the
//! instance deactivates. Completion revokes rights outright. Delegation
//! moves an instance to a new holder when the actor holds a role that is
//! a strict senior of a role of both endpoints.
//!
//! Every denial carries one alert record for the session's tenant:
//! expired sessions are unauthorized attempts, everything else flags the
//! authenticated user as a possible malicious insider.
//!
//! When several deny reasons apply at once, the reported one follows a
//! fixed precedence (session-expired, not-holder, task-not-active,
//! usage-exhausted, location-forbidden, sod-violation,
//! no-role-task-mapping, not-superior, unknown-user) so decisions are
//! deterministic.

mod instance;
mod least_privilege;

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{AlertActor, AlertDetail, AlertKind, AlertRecord};
use crate::authn::Session;
use crate::model::{InstanceId, Permission, PolicyStore, SodMode, TaskId, TenantId, UserId};
use crate::time::Timestamp;

pub use instance::{DelegationHop, EngineState, InstanceState, SodHistory, TaskInstance};
pub use least_privilege::{
    access_events_from_audit, audit_least_privilege, AccessEvent, LeastPrivilegeReport,
};

/// Endpoint labels stamped into alerts and audit records.
pub const ACTIVATE_ENDPOINT: &str = "/v1/tasks/activate";
pub const ACCESS_ENDPOINT: &str = "/v1/access";
pub const COMPLETE_ENDPOINT: &str = "/v1/tasks/complete";
pub const DELEGATE_ENDPOINT: &str = "/v1/tasks/delegate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Permit,
    Deny,
}

/// Decision and denial reason codes. `check_access` only ever reports the
/// first eight; `not-superior` and `unknown-user` belong to delegation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    Ok,
    SessionExpired,
    NotHolder,
    TaskNotActive,
    UsageExhausted,
    LocationForbidden,
    SodViolation,
    NoRoleTaskMapping,
    NotSuperior,
    UnknownUser,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::Ok => "ok",
            ReasonCode::SessionExpired => "session-expired",
            ReasonCode::NotHolder => "not-holder",
            ReasonCode::TaskNotActive => "task-not-active",
            ReasonCode::UsageExhausted => "usage-exhausted",
            ReasonCode::LocationForbidden => "location-forbidden",
            ReasonCode::SodViolation => "sod-violation",
            ReasonCode::NoRoleTaskMapping => "no-role-task-mapping",
            ReasonCode::NotSuperior => "not-superior",
            ReasonCode::UnknownUser => "unknown-user",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ReasonCode::Ok => u8::MAX,
            ReasonCode::SessionExpired => 0,
            ReasonCode::NotHolder => 1,
            ReasonCode::TaskNotActive => 2,
            ReasonCode::UsageExhausted => 3,
            ReasonCode::LocationForbidden => 4,
            ReasonCode::SodViolation => 5,
            ReasonCode::NoRoleTaskMapping => 6,
            ReasonCode::NotSuperior => 7,
            ReasonCode::UnknownUser => 8,
        }
    }
}

impl std::fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn pick_reason(failures: &[ReasonCode]) -> Option<ReasonCode> {
    failures.iter().copied().min_by_key(|r| r.precedence())
}

/// The verdict for one access request. Alerts ride along for the caller
/// to dispatch; they are not part of the wire or audit form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub verdict: Verdict,
    pub reason: ReasonCode,
    pub usage_after: u32,
    #[serde(skip, default)]
    pub alerts_emitted: Vec<AlertRecord>,
}

/// A refused engine operation. Denials carry the alert for the tenant;
/// an unknown instance is not a denial (the gateway answers not-found)
/// and raises none.
#[derive(Debug, Clone, Error)]
pub enum EngineError {
    #[error("unknown task instance {0}")]
    UnknownInstance(InstanceId),
    #[error("denied: {reason}")]
    Denied {
        reason: ReasonCode,
        alert: Box<AlertRecord>,
    },
}

impl EngineError {
    pub fn denied_reason(&self) -> Option<ReasonCode> {
        match self {
            EngineError::Denied { reason, .. } => Some(*reason),
            EngineError::UnknownInstance(_) => None,
        }
    }
}

/// Thread-safe decision engine over a policy snapshot. Instance
/// mutations serialize per instance id; the usage check-and-increment is
/// atomic, so racing requests on one remaining use yield exactly one
/// permit.
#[derive(Default)]
pub struct Engine {
    instances: RwLock<BTreeMap<InstanceId, Arc<Mutex<TaskInstance>>>>,
    sod_history: Mutex<SodHistory>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_state(state: EngineState) -> Self {
        let engine = Engine::new();
        engine.restore(state);
        engine
    }

    /// Replace all engine state with a snapshot.
    pub fn restore(&self, state: EngineState) {
        let mut instances = self.instances.write();
        instances.clear();
        for (id, inst) in state.instances {
            instances.insert(id, Arc::new(Mutex::new(inst)));
        }
        *self.sod_history.lock() = state.sod_history;
    }

    /// Copy out all engine state.
    pub fn snapshot(&self) -> EngineState {
        let instances = self
            .instances
            .read()
            .iter()
            .map(|(id, cell)| (id.clone(), cell.lock().clone()))
            .collect();
        EngineState {
            instances,
            sod_history: self.sod_history.lock().clone(),
        }
    }

    /// Tenant-scoped instance lookup; other tenants' instances do not
    /// exist as far as the caller can tell.
    pub fn instance(&self, tenant: &TenantId, id: &InstanceId) -> Option<TaskInstance> {
        let cell = self.instances.read().get(id).cloned()?;
        let inst = cell.lock();
        (&inst.tenant == tenant).then(|| inst.clone())
    }

    fn lookup(
        &self,
        tenant: &TenantId,
        id: &InstanceId,
    ) -> Result<Arc<Mutex<TaskInstance>>, EngineError> {
        let cell = self
            .instances
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownInstance(id.clone()))?;
        if &cell.lock().tenant != tenant {
            return Err(EngineError::UnknownInstance(id.clone()));
        }
        Ok(cell)
    }

    fn denial(
        &self,
        session: &Session,
        reason: ReasonCode,
        endpoint: &str,
        now: Timestamp,
    ) -> EngineError {
        EngineError::Denied {
            reason,
            alert: Box::new(deny_alert(session, reason, endpoint, now)),
        }
    }

    /// Activate a task for the session's user: requires an unexpired
    /// session, a role-task mapping among the active roles, and dynamic
    /// SoD clearance for the process instance.
    pub fn activate_task(
        &self,
        store: &PolicyStore,
        session: &Session,
        task: &TaskId,
        process_instance: Option<&str>,
        now: Timestamp,
    ) -> Result<TaskInstance, EngineError> {
        if !session.is_valid(now) {
            return Err(self.denial(session, ReasonCode::SessionExpired, ACTIVATE_ENDPOINT, now));
        }
        let def = store
            .tasks
            .get(task)
            .filter(|def| def.tenant == session.tenant);
        let Some(def) = def else {
            // An unknown or foreign task has no role mapping by definition,
            // and answering otherwise would leak other tenants' task ids.
            return Err(self.denial(
                session,
                ReasonCode::NoRoleTaskMapping,
                ACTIVATE_ENDPOINT,
                now,
            ));
        };
        let mapping_ok = session
            .active_roles
            .iter()
            .filter_map(|r| store.roles.get(r))
            .any(|role| role.granted_tasks.contains(task));

        // SoD check and association are atomic under the history lock so
        // concurrent acquisitions cannot both slip past the constraint.
        let mut history = self.sod_history.lock();
        if let Some(pinst) = process_instance {
            if sod_violates(store, &session.tenant, pinst, &session.user, task, &history) {
                return Err(self.denial(session, ReasonCode::SodViolation, ACTIVATE_ENDPOINT, now));
            }
        }
        if !mapping_ok {
            return Err(self.denial(
                session,
                ReasonCode::NoRoleTaskMapping,
                ACTIVATE_ENDPOINT,
                now,
            ));
        }
        if let Some(pinst) = process_instance {
            record_holding(&mut history, &session.tenant, pinst, &session.user, task);
        }
        drop(history);

        let inst = TaskInstance {
            id: InstanceId::random(),
            tenant: session.tenant.clone(),
            task: def.id.clone(),
            process_instance: process_instance.map(str::to_string),
            holder: session.user.clone(),
            state: InstanceState::Active,
            usage_count: 0,
            delegation_chain: Vec::new(),
        };
        self.instances
            .write()
            .insert(inst.id.clone(), Arc::new(Mutex::new(inst.clone())));
        Ok(inst)
    }

    /// Decide one permission request against an instance. A permit
    /// consumes one use and deactivates the instance at the limit; a deny
    /// changes nothing and carries an alert.
    pub fn check_access(
        &self,
        store: &PolicyStore,
        session: &Session,
        instance: &InstanceId,
        perm: &Permission,
        now: Timestamp,
    ) -> Result<AccessDecision, EngineError> {
        let cell = self.lookup(&session.tenant, instance)?;
        let mut inst = cell.lock();

        let mut failures = Vec::new();
        if !session.is_valid(now) {
            failures.push(ReasonCode::SessionExpired);
        }
        if session.user != inst.holder {
            failures.push(ReasonCode::NotHolder);
        }
        match inst.state {
            InstanceState::Active => {}
            InstanceState::Deactivated => failures.push(ReasonCode::UsageExhausted),
            InstanceState::Completed => failures.push(ReasonCode::TaskNotActive),
        }
        let def = store.tasks.get(&inst.task);
        match def {
            None => failures.push(ReasonCode::NoRoleTaskMapping),
            Some(def) => {
                if !def.permissions.contains(perm) {
                    failures.push(ReasonCode::NoRoleTaskMapping);
                }
                // Every active role granting this task must allow the
                // session's location; an empty location set is
                // unrestricted. A delegate holding the instance without
                // any granting role has nothing to check.
                let location_blocked = session
                    .active_roles
                    .iter()
                    .filter_map(|r| store.roles.get(r))
                    .filter(|role| role.granted_tasks.contains(&inst.task))
                    .any(|role| {
                        !role.allowed_locations.is_empty()
                            && !role.allowed_locations.contains(&session.location)
                    });
                if location_blocked {
                    failures.push(ReasonCode::LocationForbidden);
                }
            }
        }

        if let Some(reason) = pick_reason(&failures) {
            return Ok(AccessDecision {
                verdict: Verdict::Deny,
                reason,
                usage_after: inst.usage_count,
                alerts_emitted: vec![deny_alert(session, reason, ACCESS_ENDPOINT, now)],
            });
        }

        inst.usage_count += 1;
        let limit = def.map(|d| d.usage_limit).unwrap_or(u32::MAX);
        if inst.usage_count >= limit {
            inst.state = InstanceState::Deactivated;
        }
        Ok(AccessDecision {
            verdict: Verdict::Permit,
            reason: ReasonCode::Ok,
            usage_after: inst.usage_count,
            alerts_emitted: Vec::new(),
        })
    }

    /// Complete an instance, revoking its rights for good. Completing an
    /// already usage-exhausted instance is allowed; completing twice is
    /// not.
    pub fn complete_task(
        &self,
        _store: &PolicyStore,
        session: &Session,
        instance: &InstanceId,
        now: Timestamp,
    ) -> Result<TaskInstance, EngineError> {
        let cell = self.lookup(&session.tenant, instance)?;
        let mut inst = cell.lock();
        if !session.is_valid(now) {
            return Err(self.denial(session, ReasonCode::SessionExpired, COMPLETE_ENDPOINT, now));
        }
        if session.user != inst.holder {
            return Err(self.denial(session, ReasonCode::NotHolder, COMPLETE_ENDPOINT, now));
        }
        if inst.state == InstanceState::Completed {
            return Err(self.denial(session, ReasonCode::TaskNotActive, COMPLETE_ENDPOINT, now));
        }
        inst.state = InstanceState::Completed;
        Ok(inst.clone())
    }

    /// Reassign an active instance to `to_user`. Some single role among
    /// the actor's active roles must be a strict transitive senior of a
    /// role of the current holder and of a role of the delegate, and the
    /// delegate must clear dynamic SoD for the process instance. Usage
    /// count and limit carry over untouched.
    pub fn delegate_task(
        &self,
        store: &PolicyStore,
        session: &Session,
        instance: &InstanceId,
        to_user: &UserId,
        now: Timestamp,
    ) -> Result<TaskInstance, EngineError> {
        let cell = self.lookup(&session.tenant, instance)?;
        let mut inst = cell.lock();
        if !session.is_valid(now) {
            return Err(self.denial(session, ReasonCode::SessionExpired, DELEGATE_ENDPOINT, now));
        }
        if inst.state != InstanceState::Active {
            return Err(self.denial(session, ReasonCode::TaskNotActive, DELEGATE_ENDPOINT, now));
        }
        if store.user(&session.tenant, to_user).is_none() {
            return Err(self.denial(session, ReasonCode::UnknownUser, DELEGATE_ENDPOINT, now));
        }
        let Some(by_role) = delegation_role(store, session, &inst.holder, to_user) else {
            return Err(self.denial(session, ReasonCode::NotSuperior, DELEGATE_ENDPOINT, now));
        };

        let mut history = self.sod_history.lock();
        if let Some(pinst) = inst.process_instance.as_deref() {
            if sod_violates(store, &session.tenant, pinst, to_user, &inst.task, &history) {
                return Err(self.denial(session, ReasonCode::SodViolation, DELEGATE_ENDPOINT, now));
            }
            record_holding(&mut history, &session.tenant, pinst, to_user, &inst.task);
        }
        drop(history);

        let hop = DelegationHop {
            from: inst.holder.clone(),
            to: to_user.clone(),
            by: by_role,
        };
        inst.delegation_chain.push(hop);
        inst.holder = to_user.clone();
        Ok(inst.clone())
    }
}

fn deny_alert(session: &Session, reason: ReasonCode, endpoint: &str, now: Timestamp) -> AlertRecord {
    let kind = if reason == ReasonCode::SessionExpired {
        AlertKind::UnauthorizedAttempt
    } else {
        AlertKind::MaliciousInsider
    };
    AlertRecord {
        tenant: session.tenant.clone(),
        kind,
        actor: AlertActor::user(&session.user),
        detail: AlertDetail {
            reason: reason.as_str().to_string(),
            endpoint: endpoint.to_string(),
        },
        timestamp: now,
    }
}

/// The first active role of the actor that strictly dominates a role of
/// both the holder and the delegate, if any.
fn delegation_role(
    store: &PolicyStore,
    session: &Session,
    holder: &UserId,
    to_user: &UserId,
) -> Option<crate::model::RoleId> {
    let roles_of = |user: &UserId| {
        store
            .user(&session.tenant, user)
            .map(|u| u.assigned_roles.clone())
            .unwrap_or_default()
    };
    let holder_roles = roles_of(holder);
    let delegate_roles = roles_of(to_user);
    session.active_roles.iter().cloned().find(|actor_role| {
        let dominates = |candidates: &std::collections::BTreeSet<crate::model::RoleId>| {
            candidates
                .iter()
                .any(|r| crate::model::strictly_senior(store, actor_role, r))
        };
        dominates(&holder_roles) && dominates(&delegate_roles)
    })
}

/// Would `user` holding `task` in `pinst` pair two conflicting tasks of
/// a dynamic constraint?
fn sod_violates(
    store: &PolicyStore,
    tenant: &TenantId,
    pinst: &str,
    user: &UserId,
    task: &TaskId,
    history: &SodHistory,
) -> bool {
    let held = history
        .get(tenant)
        .and_then(|t| t.get(pinst))
        .and_then(|p| p.get(user));
    let Some(held) = held else {
        return false;
    };
    store
        .sod_constraints_of(tenant, SodMode::Dynamic)
        .any(|(_, c)| {
            c.conflicting_tasks.contains(task)
                && held
                    .iter()
                    .any(|h| h != task && c.conflicting_tasks.contains(h))
        })
}

fn record_holding(
    history: &mut SodHistory,
    tenant: &TenantId,
    pinst: &str,
    user: &UserId,
    task: &TaskId,
) {
    history
        .entry(tenant.clone())
        .or_default()
        .entry(pinst.to_string())
        .or_default()
        .entry(user.clone())
        .or_default()
        .insert(task.clone());
}

#[cfg(test)]
mod tests;
