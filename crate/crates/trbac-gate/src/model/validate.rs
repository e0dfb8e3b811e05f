//! Load-time policy validation.
//!
//! `validate_policy` never fails; it returns one diagnostic per violated
//! invariant. An empty result is the precondition every other module
//! assumes about referential integrity.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::id::{LocationId, RoleId, TaskId, TenantId, UserId};
use super::resolve::role_closure;
use super::store::{PolicyStore, SodMode};

/// One violated invariant. The display form is what the CLI prints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diagnostic {
    /// Map key does not equal the entity's own id field.
    KeyMismatch { entity: String, key: String, id: String },
    /// An entity names a tenant that does not exist.
    UnknownTenant { entity: String, tenant: TenantId },
    /// An entity references another that does not exist.
    DanglingReference { entity: String, reference: String },
    /// An entity references an entity of a different tenant.
    CrossTenantReference {
        entity: String,
        entity_tenant: TenantId,
        reference: String,
        reference_tenant: TenantId,
    },
    /// Role seniority is cyclic within a tenant.
    HierarchyCycle { tenant: TenantId, roles: Vec<RoleId> },
    /// A user can reach two tasks of one static SoD constraint.
    StaticSodViolation {
        tenant: TenantId,
        constraint: String,
        user: UserId,
        tasks: Vec<TaskId>,
    },
    /// Task usage limit below 1.
    ZeroUsageLimit { task: TaskId },
    /// Task declares no permissions.
    EmptyTaskPermissions { task: TaskId },
    /// Permission verb missing from the operation vocabulary.
    UndeclaredOperation { task: TaskId, operation: String },
    /// Role restricted to a location missing from the registry.
    UnknownLocation { role: RoleId, location: LocationId },
    /// SoD constraint with fewer than two conflicting tasks.
    SodTooFewTasks { constraint: String },
    /// SoD constraint naming a task outside its process.
    SodTaskOutsideProcess { constraint: String, task: TaskId },
    /// User's employee id has no directory entry.
    UnknownEmployee {
        tenant: TenantId,
        user: UserId,
        employee_id: String,
    },
    /// Two users of one tenant claim the same employee id.
    DuplicateEmployeeBinding {
        tenant: TenantId,
        employee_id: String,
        users: Vec<UserId>,
    },
    /// Empty employee id in a tenant directory.
    EmptyEmployeeId { tenant: TenantId },
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::KeyMismatch { entity, key, id } => {
                write!(f, "{entity}: map key {key:?} does not match id {id:?}")
            }
            Diagnostic::UnknownTenant { entity, tenant } => {
                write!(f, "{entity}: unknown tenant {tenant}")
            }
            Diagnostic::DanglingReference { entity, reference } => {
                write!(f, "{entity}: dangling reference to {reference}")
            }
            Diagnostic::CrossTenantReference {
                entity,
                entity_tenant,
                reference,
                reference_tenant,
            } => write!(
                f,
                "{entity} (tenant {entity_tenant}): cross-tenant reference to {reference} (tenant {reference_tenant})"
            ),
            Diagnostic::HierarchyCycle { tenant, roles } => {
                let names: Vec<&str> = roles.iter().map(|r| r.as_str()).collect();
                write!(
                    f,
                    "tenant {tenant}: role hierarchy cycle through [{}]",
                    names.join(", ")
                )
            }
            Diagnostic::StaticSodViolation {
                tenant,
                constraint,
                user,
                tasks,
            } => {
                let names: Vec<&str> = tasks.iter().map(|t| t.as_str()).collect();
                write!(
                    f,
                    "tenant {tenant}: user {user} reaches conflicting tasks [{}] of static SoD constraint {constraint}",
                    names.join(", ")
                )
            }
            Diagnostic::ZeroUsageLimit { task } => {
                write!(f, "task {task}: usage_limit must be at least 1")
            }
            Diagnostic::EmptyTaskPermissions { task } => {
                write!(f, "task {task}: permission set is empty")
            }
            Diagnostic::UndeclaredOperation { task, operation } => {
                write!(f, "task {task}: operation {operation:?} not in the vocabulary")
            }
            Diagnostic::UnknownLocation { role, location } => {
                write!(f, "role {role}: unknown location {location}")
            }
            Diagnostic::SodTooFewTasks { constraint } => {
                write!(f, "sod constraint {constraint}: needs at least two conflicting tasks")
            }
            Diagnostic::SodTaskOutsideProcess { constraint, task } => {
                write!(f, "sod constraint {constraint}: task {task} is outside the constraint's process")
            }
            Diagnostic::UnknownEmployee {
                tenant,
                user,
                employee_id,
            } => write!(
                f,
                "tenant {tenant}: user {user} claims employee id {employee_id:?} with no directory entry"
            ),
            Diagnostic::DuplicateEmployeeBinding {
                tenant,
                employee_id,
                users,
            } => {
                let names: Vec<&str> = users.iter().map(|u| u.as_str()).collect();
                write!(
                    f,
                    "tenant {tenant}: employee id {employee_id:?} bound by multiple users [{}]",
                    names.join(", ")
                )
            }
            Diagnostic::EmptyEmployeeId { tenant } => {
                write!(f, "tenant {tenant}: directory contains an empty employee id")
            }
        }
    }
}

/// Check every store invariant, returning one diagnostic per violation.
/// Deterministic: iteration follows the store's ordered collections.
pub fn validate_policy(store: &PolicyStore) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_keys(store, &mut out);
    check_directories(store, &mut out);
    check_users(store, &mut out);
    check_roles(store, &mut out);
    check_tasks(store, &mut out);
    check_sod_shape(store, &mut out);
    check_cycles(store, &mut out);
    check_static_sod(store, &mut out);
    out
}

fn check_keys(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (key, tenant) in &store.tenants {
        if key != &tenant.id {
            out.push(Diagnostic::KeyMismatch {
                entity: format!("tenant {key}"),
                key: key.to_string(),
                id: tenant.id.to_string(),
            });
        }
    }
    for (tenant_key, users) in &store.users {
        if !store.tenants.contains_key(tenant_key) {
            out.push(Diagnostic::UnknownTenant {
                entity: format!("user table for {tenant_key}"),
                tenant: tenant_key.clone(),
            });
        }
        for (user_key, user) in users {
            if user_key != &user.id {
                out.push(Diagnostic::KeyMismatch {
                    entity: format!("user {tenant_key}:{user_key}"),
                    key: user_key.to_string(),
                    id: user.id.to_string(),
                });
            }
            if &user.tenant != tenant_key {
                out.push(Diagnostic::KeyMismatch {
                    entity: format!("user {tenant_key}:{user_key}"),
                    key: tenant_key.to_string(),
                    id: user.tenant.to_string(),
                });
            }
        }
    }
    for (key, role) in &store.roles {
        if key != &role.id {
            out.push(Diagnostic::KeyMismatch {
                entity: format!("role {key}"),
                key: key.to_string(),
                id: role.id.to_string(),
            });
        }
        if !store.tenants.contains_key(&role.tenant) {
            out.push(Diagnostic::UnknownTenant {
                entity: format!("role {key}"),
                tenant: role.tenant.clone(),
            });
        }
    }
    for (key, task) in &store.tasks {
        if key != &task.id {
            out.push(Diagnostic::KeyMismatch {
                entity: format!("task {key}"),
                key: key.to_string(),
                id: task.id.to_string(),
            });
        }
        if !store.tenants.contains_key(&task.tenant) {
            out.push(Diagnostic::UnknownTenant {
                entity: format!("task {key}"),
                tenant: task.tenant.clone(),
            });
        }
    }
    for (key, sod) in &store.sod_constraints {
        if !store.tenants.contains_key(&sod.tenant) {
            out.push(Diagnostic::UnknownTenant {
                entity: format!("sod constraint {key}"),
                tenant: sod.tenant.clone(),
            });
        }
    }
}

fn check_directories(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (tenant_id, tenant) in &store.tenants {
        if tenant.directory.keys().any(|k| k.is_empty()) {
            out.push(Diagnostic::EmptyEmployeeId {
                tenant: tenant_id.clone(),
            });
        }
    }
}

fn check_users(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (tenant_id, users) in &store.users {
        let mut bindings: BTreeMap<&str, Vec<UserId>> = BTreeMap::new();
        for (user_id, user) in users {
            bindings
                .entry(user.employee_id.as_str())
                .or_default()
                .push(user_id.clone());
            match store.tenants.get(tenant_id) {
                Some(tenant) if tenant.directory.contains_key(&user.employee_id) => {}
                Some(_) => out.push(Diagnostic::UnknownEmployee {
                    tenant: tenant_id.clone(),
                    user: user_id.clone(),
                    employee_id: user.employee_id.clone(),
                }),
                // Missing tenant already reported by check_keys.
                None => {}
            }
            for role_id in &user.assigned_roles {
                match store.roles.get(role_id) {
                    None => out.push(Diagnostic::DanglingReference {
                        entity: format!("user {tenant_id}:{user_id}"),
                        reference: format!("role {role_id}"),
                    }),
                    Some(role) if &role.tenant != tenant_id => {
                        out.push(Diagnostic::CrossTenantReference {
                            entity: format!("user {user_id}"),
                            entity_tenant: tenant_id.clone(),
                            reference: format!("role {role_id}"),
                            reference_tenant: role.tenant.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        for (employee_id, holders) in bindings {
            if holders.len() > 1 {
                out.push(Diagnostic::DuplicateEmployeeBinding {
                    tenant: tenant_id.clone(),
                    employee_id: employee_id.to_string(),
                    users: holders,
                });
            }
        }
    }
}

fn check_roles(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (role_id, role) in &store.roles {
        for junior in &role.juniors {
            match store.roles.get(junior) {
                None => out.push(Diagnostic::DanglingReference {
                    entity: format!("role {role_id}"),
                    reference: format!("role {junior}"),
                }),
                Some(j) if j.tenant != role.tenant => {
                    out.push(Diagnostic::CrossTenantReference {
                        entity: format!("role {role_id}"),
                        entity_tenant: role.tenant.clone(),
                        reference: format!("role {junior}"),
                        reference_tenant: j.tenant.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        for location in &role.allowed_locations {
            if !store.locations.contains(location) {
                out.push(Diagnostic::UnknownLocation {
                    role: role_id.clone(),
                    location: location.clone(),
                });
            }
        }
        for task_id in &role.granted_tasks {
            match store.tasks.get(task_id) {
                None => out.push(Diagnostic::DanglingReference {
                    entity: format!("role {role_id}"),
                    reference: format!("task {task_id}"),
                }),
                Some(task) if task.tenant != role.tenant => {
                    out.push(Diagnostic::CrossTenantReference {
                        entity: format!("role {role_id}"),
                        entity_tenant: role.tenant.clone(),
                        reference: format!("task {task_id}"),
                        reference_tenant: task.tenant.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }
}

fn check_tasks(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (task_id, task) in &store.tasks {
        if task.usage_limit < 1 {
            out.push(Diagnostic::ZeroUsageLimit {
                task: task_id.clone(),
            });
        }
        if task.permissions.is_empty() {
            out.push(Diagnostic::EmptyTaskPermissions {
                task: task_id.clone(),
            });
        }
        for perm in &task.permissions {
            if !store.operations.contains(&perm.operation) {
                out.push(Diagnostic::UndeclaredOperation {
                    task: task_id.clone(),
                    operation: perm.operation.clone(),
                });
            }
        }
    }
}

fn check_sod_shape(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (name, sod) in &store.sod_constraints {
        if sod.conflicting_tasks.len() < 2 {
            out.push(Diagnostic::SodTooFewTasks {
                constraint: name.clone(),
            });
        }
        for task_id in &sod.conflicting_tasks {
            match store.tasks.get(task_id) {
                None => out.push(Diagnostic::DanglingReference {
                    entity: format!("sod constraint {name}"),
                    reference: format!("task {task_id}"),
                }),
                Some(task) => {
                    if task.tenant != sod.tenant {
                        out.push(Diagnostic::CrossTenantReference {
                            entity: format!("sod constraint {name}"),
                            entity_tenant: sod.tenant.clone(),
                            reference: format!("task {task_id}"),
                            reference_tenant: task.tenant.clone(),
                        });
                    }
                    if task.process.as_ref() != Some(&sod.process) {
                        out.push(Diagnostic::SodTaskOutsideProcess {
                            constraint: name.clone(),
                            task: task_id.clone(),
                        });
                    }
                }
            }
        }
    }
}

fn check_cycles(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for tenant_id in store.tenants.keys() {
        let mut graph: DiGraph<RoleId, ()> = DiGraph::new();
        let mut nodes = BTreeMap::new();
        for (role_id, role) in &store.roles {
            if &role.tenant == tenant_id {
                nodes.insert(role_id.clone(), graph.add_node(role_id.clone()));
            }
        }
        for (role_id, role) in &store.roles {
            if &role.tenant != tenant_id {
                continue;
            }
            for junior in &role.juniors {
                if let (Some(&from), Some(&to)) = (nodes.get(role_id), nodes.get(junior)) {
                    graph.add_edge(from, to, ());
                }
            }
        }
        for component in tarjan_scc(&graph) {
            let is_cycle = component.len() > 1
                || component
                    .first()
                    .is_some_and(|&n| graph.find_edge(n, n).is_some());
            if is_cycle {
                let mut roles: Vec<RoleId> =
                    component.iter().map(|&n| graph[n].clone()).collect();
                roles.sort();
                out.push(Diagnostic::HierarchyCycle {
                    tenant: tenant_id.clone(),
                    roles,
                });
            }
        }
    }
}

fn check_static_sod(store: &PolicyStore, out: &mut Vec<Diagnostic>) {
    for (tenant_id, users) in &store.users {
        for (user_id, user) in users {
            let effective = role_closure(store, &user.assigned_roles);
            // Lenient task union: dangling roles are reported elsewhere.
            let reachable: BTreeSet<TaskId> = effective
                .iter()
                .filter_map(|r| store.roles.get(r))
                .flat_map(|r| r.granted_tasks.iter().cloned())
                .collect();
            for (name, sod) in store.sod_constraints_of(tenant_id, SodMode::Static) {
                let overlap: Vec<TaskId> = sod
                    .conflicting_tasks
                    .intersection(&reachable)
                    .cloned()
                    .collect();
                if overlap.len() >= 2 {
                    out.push(Diagnostic::StaticSodViolation {
                        tenant: tenant_id.clone(),
                        constraint: name.clone(),
                        user: user_id.clone(),
                        tasks: overlap,
                    });
                }
            }
        }
    }
}
