//! The multi-tenant policy store: tenants, directories, roles, tasks,
//! permissions, separation-of-duty constraints, locations, and the
//! operation vocabulary.
//!
//! The store is an immutable snapshot at decision time. All collections
//! are ordered (`BTreeMap`/`BTreeSet`) so serialization is canonical:
//! saving a loaded store reproduces it byte for byte.
//!
//! Scoping rules:
//! - `RoleId`, `TaskId`, and SoD constraint ids are unique across the
//!   store; each entity carries its owning tenant and may only reference
//!   entities of that tenant.
//! - `UserId` is unique within its tenant only; users are keyed by
//!   tenant, then user.
//! - Locations and the operation vocabulary are provider-level
//!   registries shared by all tenants (they describe the infrastructure,
//!   not tenant data).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::id::{LocationId, ObjectId, ProcessId, RoleId, TaskId, TenantId, UserId};

/// One person in a tenant's pre-provisioned employee directory, keyed by
/// employee id in [`Tenant::directory`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectoryEntry {
    pub name: String,
    pub designation: String,
}

/// Where a tenant's alerts are delivered.
///
/// The per-tenant alert log file is always written; it is the system of
/// record that `GET /v1/alerts` reads. An outbound mail address is an
/// optional additional channel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertSinkSpec {
    /// Override for the alert log path; defaults to `alerts/<tenant>.log`
    /// under the gateway data directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Outbound mail address; delivery goes through the configured mail
    /// outbox.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tenant {
    pub id: TenantId,
    pub name: String,
    /// Employee directory keyed by employee id; key uniqueness is the
    /// per-tenant uniqueness invariant.
    #[serde(default)]
    pub directory: BTreeMap<String, DirectoryEntry>,
    #[serde(default)]
    pub alert_sink: AlertSinkSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Role {
    pub id: RoleId,
    pub tenant: TenantId,
    /// Roles this role is senior to. Seniority is transitive and must be
    /// acyclic per tenant.
    #[serde(default)]
    pub juniors: BTreeSet<RoleId>,
    /// Zones this role may be exercised from; empty means unrestricted.
    #[serde(default)]
    pub allowed_locations: BTreeSet<LocationId>,
    #[serde(default)]
    pub granted_tasks: BTreeSet<TaskId>,
}

/// An authorization to perform one operation on one object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Permission {
    pub operation: String,
    pub object: ObjectId,
}

impl Permission {
    pub fn new(operation: impl Into<String>, object: ObjectId) -> Self {
        Permission {
            operation: operation.into(),
            object,
        }
    }
}

impl std::fmt::Display for Permission {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.operation, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub id: TaskId,
    pub tenant: TenantId,
    /// Successful authorization steps allowed per instance before its
    /// permissions deactivate. Must be at least 1.
    pub usage_limit: u32,
    pub permissions: BTreeSet<Permission>,
    /// Business process this task belongs to; tasks outside any process
    /// are exempt from separation-of-duty constraints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SodMode {
    /// Checked at validation time on each user's reachable task set.
    Static,
    /// Checked at runtime per process instance.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SodConstraint {
    pub tenant: TenantId,
    pub process: ProcessId,
    /// Tasks no single user may combine; at least two.
    pub conflicting_tasks: BTreeSet<TaskId>,
    pub mode: SodMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub id: UserId,
    pub tenant: TenantId,
    /// Link into the tenant directory; registration claims a user record
    /// through this id.
    pub employee_id: String,
    #[serde(default)]
    pub assigned_roles: BTreeSet<RoleId>,
}

/// The full multi-tenant configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyStore {
    #[serde(default)]
    pub tenants: BTreeMap<TenantId, Tenant>,
    /// Users keyed by tenant, then user id.
    #[serde(default)]
    pub users: BTreeMap<TenantId, BTreeMap<UserId, User>>,
    #[serde(default)]
    pub roles: BTreeMap<RoleId, Role>,
    #[serde(default)]
    pub tasks: BTreeMap<TaskId, TaskDef>,
    /// Separation-of-duty constraints keyed by constraint id.
    #[serde(default)]
    pub sod_constraints: BTreeMap<String, SodConstraint>,
    /// Provider-level zone registry.
    #[serde(default)]
    pub locations: BTreeSet<LocationId>,
    /// Verbs permissions may use.
    #[serde(default)]
    pub operations: BTreeSet<String>,
}

impl PolicyStore {
    pub fn user(&self, tenant: &TenantId, user: &UserId) -> Option<&User> {
        self.users.get(tenant).and_then(|m| m.get(user))
    }

    pub fn users_of(&self, tenant: &TenantId) -> impl Iterator<Item = &User> {
        self.users.get(tenant).into_iter().flat_map(|m| m.values())
    }

    pub fn all_users(&self) -> impl Iterator<Item = &User> {
        self.users.values().flat_map(|m| m.values())
    }

    /// Look up a tenant's user record by employee id.
    pub fn user_by_employee_id(&self, tenant: &TenantId, employee_id: &str) -> Option<&User> {
        self.users_of(tenant).find(|u| u.employee_id == employee_id)
    }

    /// SoD constraints of one tenant filtered by mode.
    pub fn sod_constraints_of<'a>(
        &'a self,
        tenant: &'a TenantId,
        mode: SodMode,
    ) -> impl Iterator<Item = (&'a String, &'a SodConstraint)> + 'a {
        self.sod_constraints
            .iter()
            .filter(move |(_, c)| &c.tenant == tenant && c.mode == mode)
    }

    /// Every distinct permission declared by the tenant's task definitions.
    pub fn declared_permissions(&self, tenant: &TenantId) -> BTreeSet<Permission> {
        self.tasks
            .values()
            .filter(|t| &t.tenant == tenant)
            .flat_map(|t| t.permissions.iter().cloned())
            .collect()
    }
}
