//! Pure resolution rules over a policy snapshot: role hierarchy closure
//! and role-to-task reachability.

use std::collections::BTreeSet;

use thiserror::Error;

use super::id::{RoleId, TaskId, TenantId, UserId};
use super::store::PolicyStore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown user {user} in tenant {tenant}")]
    UnknownUser { tenant: TenantId, user: UserId },
    #[error("unknown role {0}")]
    UnknownRole(RoleId),
}

/// A user's assigned roles plus everything reachable through the
/// seniority relation: a senior role inherits the grants of its juniors,
/// transitively.
///
/// Tolerates hierarchy cycles (a visited set bounds the walk) so
/// validation can report cycles instead of diverging.
pub fn resolve_effective_roles(
    store: &PolicyStore,
    tenant: &TenantId,
    user: &UserId,
) -> Result<BTreeSet<RoleId>, ResolveError> {
    let user = store.user(tenant, user).ok_or_else(|| ResolveError::UnknownUser {
        tenant: tenant.clone(),
        user: user.clone(),
    })?;
    Ok(role_closure(store, &user.assigned_roles))
}

/// Transitive closure of `roles` over the juniors relation. Role ids
/// that do not resolve are kept in the result (validation reports them as
/// dangling; resolution stays total).
pub fn role_closure(store: &PolicyStore, roles: &BTreeSet<RoleId>) -> BTreeSet<RoleId> {
    let mut seen: BTreeSet<RoleId> = BTreeSet::new();
    let mut stack: Vec<RoleId> = roles.iter().cloned().collect();
    while let Some(role_id) = stack.pop() {
        if !seen.insert(role_id.clone()) {
            continue;
        }
        if let Some(role) = store.roles.get(&role_id) {
            for junior in &role.juniors {
                if !seen.contains(junior) {
                    stack.push(junior.clone());
                }
            }
        }
    }
    seen
}

/// Union of `granted_tasks` over the given roles.
pub fn permitted_tasks(
    store: &PolicyStore,
    roles: &BTreeSet<RoleId>,
) -> Result<BTreeSet<TaskId>, ResolveError> {
    let mut tasks = BTreeSet::new();
    for role_id in roles {
        let role = store
            .roles
            .get(role_id)
            .ok_or_else(|| ResolveError::UnknownRole(role_id.clone()))?;
        tasks.extend(role.granted_tasks.iter().cloned());
    }
    Ok(tasks)
}

/// True when `senior` dominates `junior` through one or more seniority
/// edges. A role is never a strict senior of itself unless the hierarchy
/// is cyclic.
pub fn strictly_senior(store: &PolicyStore, senior: &RoleId, junior: &RoleId) -> bool {
    let Some(role) = store.roles.get(senior) else {
        return false;
    };
    role_closure(store, &role.juniors).contains(junior)
}
