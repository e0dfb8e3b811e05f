//! Least-privilege auditing: which reachable permissions did each user
//! not exercise recently? Purely advisory; the report names revocation
//! candidates and mutates nothing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{role_closure, Permission, PolicyStore, TenantId, UserId};
use crate::persist::{AuditRecord, AuditVerdict};
use crate::time::Timestamp;

/// One access-check outcome attributed to a user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub timestamp: Timestamp,
    pub tenant: TenantId,
    pub user: UserId,
    pub permission: Permission,
    pub permitted: bool,
}

/// Extract access events from audit records; only records carrying a
/// checked permission and an attributed user qualify.
pub fn access_events_from_audit(records: &[AuditRecord]) -> Vec<AccessEvent> {
    records
        .iter()
        .filter_map(|r| {
            let tenant = r.actor.tenant.clone()?;
            let user = r.actor.user.clone()?;
            let operation = r.operation.clone()?;
            let object = r.object.clone()?;
            Some(AccessEvent {
                timestamp: r.timestamp,
                tenant,
                user,
                permission: Permission { operation, object },
                permitted: r.verdict == AuditVerdict::Permit,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeastPrivilegeReport {
    pub window_start: Timestamp,
    pub window_end: Timestamp,
    /// Per user: reachable permissions minus those exercised in the
    /// window — revocation candidates. Users who exercised everything
    /// get an empty entry.
    pub unexercised: BTreeMap<TenantId, BTreeMap<UserId, BTreeSet<Permission>>>,
}

/// Compare each user's reachable permissions against those actually
/// exercised (permitted) within the trailing window ending at `now`.
pub fn audit_least_privilege(
    store: &PolicyStore,
    events: &[AccessEvent],
    window_millis: u64,
    now: Timestamp,
) -> LeastPrivilegeReport {
    let window_start = now.minus_millis(window_millis);

    let mut exercised: BTreeMap<(TenantId, UserId), BTreeSet<Permission>> = BTreeMap::new();
    for event in events {
        if !event.permitted || event.timestamp < window_start || event.timestamp > now {
            continue;
        }
        exercised
            .entry((event.tenant.clone(), event.user.clone()))
            .or_default()
            .insert(event.permission.clone());
    }

    let mut unexercised: BTreeMap<TenantId, BTreeMap<UserId, BTreeSet<Permission>>> =
        BTreeMap::new();
    for user in store.all_users() {
        let effective = role_closure(store, &user.assigned_roles);
        let reachable: BTreeSet<Permission> = effective
            .iter()
            .filter_map(|r| store.roles.get(r))
            .flat_map(|r| r.granted_tasks.iter())
            .filter_map(|t| store.tasks.get(t))
            .flat_map(|t| t.permissions.iter().cloned())
            .collect();
        let used = exercised
            .get(&(user.tenant.clone(), user.id.clone()))
            .cloned()
            .unwrap_or_default();
        let candidates: BTreeSet<Permission> = reachable.difference(&used).cloned().collect();
        unexercised
            .entry(user.tenant.clone())
            .or_default()
            .insert(user.id.clone(), candidates);
    }

    LeastPrivilegeReport {
        window_start,
        window_end: now,
        unexercised,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{oid, tid, uid};
    use crate::model::StoreBuilder;

    fn store() -> PolicyStore {
        StoreBuilder::new("acme")
            .task_with_perms("t-db", 5, &[("read", "db")], None)
            .task_with_perms("t-vm", 5, &[("configure", "vm")], None)
            .role("operator", &["t-db", "t-vm"])
            .user("ada", &["operator"])
            .build()
    }

    fn event(op: &str, obj: &str, ts: u64, permitted: bool) -> AccessEvent {
        AccessEvent {
            timestamp: Timestamp(ts),
            tenant: tid("acme"),
            user: uid("ada"),
            permission: Permission::new(op, oid(obj)),
            permitted,
        }
    }

    #[test]
    fn fully_exercised_user_has_an_empty_entry() {
        let store = store();
        let events = vec![
            event("read", "db", 900, true),
            event("configure", "vm", 950, true),
        ];
        let report = audit_least_privilege(&store, &events, 1_000, Timestamp(1_000));
        assert_eq!(report.unexercised[&tid("acme")][&uid("ada")], BTreeSet::new());
    }

    #[test]
    fn unexercised_reachable_permission_is_flagged() {
        let store = store();
        let events = vec![event("read", "db", 900, true)];
        let report = audit_least_privilege(&store, &events, 1_000, Timestamp(1_000));
        let flagged = &report.unexercised[&tid("acme")][&uid("ada")];
        assert_eq!(
            flagged.iter().collect::<Vec<_>>(),
            vec![&Permission::new("configure", oid("vm"))]
        );
    }

    #[test]
    fn report_matches_set_difference_oracle() {
        // Oracle: expand the user's full access matrix row, subtract the
        // permits inside the window, independently of the implementation.
        let store = store();
        let events = vec![
            event("read", "db", 100, true),       // outside window
            event("configure", "vm", 950, true),  // inside
            event("read", "db", 960, false),      // deny: not an exercise
        ];
        let now = Timestamp(1_000);
        let window = 200;

        let mut matrix_row = BTreeSet::new();
        for task in store.tasks.values() {
            matrix_row.extend(task.permissions.iter().cloned());
        }
        let mut oracle = matrix_row.clone();
        for e in &events {
            if e.permitted && e.timestamp >= now.minus_millis(window) {
                oracle.remove(&e.permission);
            }
        }

        let report = audit_least_privilege(&store, &events, window, now);
        assert_eq!(report.unexercised[&tid("acme")][&uid("ada")], oracle);
    }

    #[test]
    fn audit_adapter_keeps_only_attributed_permission_checks() {
        use crate::persist::{AuditActor, AuditRecord, AuditVerdict};
        let records = vec![
            AuditRecord {
                timestamp: Timestamp(1),
                actor: AuditActor {
                    tenant: Some(tid("acme")),
                    user: Some(uid("ada")),
                },
                endpoint: "/v1/access".to_string(),
                verdict: AuditVerdict::Permit,
                reason: "ok".to_string(),
                instance: None,
                operation: Some("read".to_string()),
                object: Some(oid("db")),
            },
            AuditRecord {
                timestamp: Timestamp(2),
                actor: AuditActor::default(),
                endpoint: "/v1/login".to_string(),
                verdict: AuditVerdict::Ok,
                reason: "ok".to_string(),
                instance: None,
                operation: None,
                object: None,
            },
        ];
        let events = access_events_from_audit(&records);
        assert_eq!(events.len(), 1);
        assert!(events[0].permitted);
        assert_eq!(events[0].permission, Permission::new("read", oid("db")));
    }
}
