//! Fluent construction of policy stores.
//!
//! Intended for examples, tests, and tooling; deployments normally load
//! policies from files. Methods panic on malformed identifiers since
//! builder inputs are programmer-supplied literals.

use std::collections::BTreeSet;

use super::id::{LocationId, ObjectId, ProcessId, RoleId, TaskId, TenantId, UserId};
use super::store::{
    DirectoryEntry, Permission, PolicyStore, Role, SodConstraint, SodMode, TaskDef, Tenant, User,
};

/// Builds a [`PolicyStore`] one tenant at a time. Entities added after a
/// [`StoreBuilder::tenant`] call belong to that tenant.
#[derive(Debug, Clone)]
pub struct StoreBuilder {
    current: TenantId,
    store: PolicyStore,
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str) -> T
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .unwrap_or_else(|e| panic!("invalid {what} {raw:?}: {e}"))
}

impl StoreBuilder {
    pub fn new(tenant: &str) -> Self {
        let mut builder = StoreBuilder {
            current: parse(tenant, "tenant id"),
            store: PolicyStore::default(),
        };
        builder.store.operations.insert("read".to_string());
        builder.insert_tenant(tenant);
        builder
    }

    fn insert_tenant(&mut self, tenant: &str) {
        let id: TenantId = parse(tenant, "tenant id");
        self.store.tenants.entry(id.clone()).or_insert(Tenant {
            id: id.clone(),
            name: tenant.to_string(),
            directory: Default::default(),
            alert_sink: Default::default(),
        });
        self.store.users.entry(id).or_default();
    }

    /// Switch the current tenant, creating it if needed.
    pub fn tenant(mut self, tenant: &str) -> Self {
        self.insert_tenant(tenant);
        self.current = parse(tenant, "tenant id");
        self
    }

    pub fn operations(mut self, ops: &[&str]) -> Self {
        self.store
            .operations
            .extend(ops.iter().map(|o| o.to_string()));
        self
    }

    pub fn locations(mut self, locations: &[&str]) -> Self {
        self.store
            .locations
            .extend(locations.iter().map(|l| parse::<LocationId>(l, "location id")));
        self
    }

    pub fn directory_entry(mut self, employee_id: &str, name: &str, designation: &str) -> Self {
        let tenant = self
            .store
            .tenants
            .get_mut(&self.current)
            .expect("current tenant exists");
        tenant.directory.insert(
            employee_id.to_string(),
            DirectoryEntry {
                name: name.to_string(),
                designation: designation.to_string(),
            },
        );
        self
    }

    /// Task with a default `read` permission on an object named after it.
    pub fn task(self, id: &str, usage_limit: u32) -> Self {
        let object = format!("doc-{id}");
        self.task_with_perms(id, usage_limit, &[("read", &object)], None)
    }

    pub fn task_with_perms(
        mut self,
        id: &str,
        usage_limit: u32,
        perms: &[(&str, &str)],
        process: Option<&str>,
    ) -> Self {
        let permissions: BTreeSet<Permission> = perms
            .iter()
            .map(|(op, obj)| {
                self.store.operations.insert(op.to_string());
                Permission::new(*op, parse::<ObjectId>(obj, "object id"))
            })
            .collect();
        let task_id: TaskId = parse(id, "task id");
        self.store.tasks.insert(
            task_id.clone(),
            TaskDef {
                id: task_id,
                tenant: self.current.clone(),
                usage_limit,
                permissions,
                process: process.map(|p| parse::<ProcessId>(p, "process id")),
            },
        );
        self
    }

    pub fn role(self, id: &str, tasks: &[&str]) -> Self {
        self.role_with_juniors(id, &[], tasks)
    }

    pub fn role_with_juniors(mut self, id: &str, juniors: &[&str], tasks: &[&str]) -> Self {
        let role_id: RoleId = parse(id, "role id");
        self.store.roles.insert(
            role_id.clone(),
            Role {
                id: role_id,
                tenant: self.current.clone(),
                juniors: juniors.iter().map(|j| parse(j, "role id")).collect(),
                allowed_locations: BTreeSet::new(),
                granted_tasks: tasks.iter().map(|t| parse(t, "task id")).collect(),
            },
        );
        self
    }

    /// Restrict an existing role to the given locations, registering them
    /// in the store's location registry.
    pub fn role_locations(mut self, id: &str, locations: &[&str]) -> Self {
        let role_id: RoleId = parse(id, "role id");
        let locations: BTreeSet<LocationId> = locations
            .iter()
            .map(|l| parse::<LocationId>(l, "location id"))
            .collect();
        self.store.locations.extend(locations.iter().cloned());
        self.store
            .roles
            .get_mut(&role_id)
            .unwrap_or_else(|| panic!("role {id} not defined yet"))
            .allowed_locations = locations;
        self
    }

    /// User with an auto-generated directory entry (`emp-<id>`).
    pub fn user(self, id: &str, roles: &[&str]) -> Self {
        let employee_id = format!("emp-{id}");
        self.user_with_employee(id, &employee_id, id, roles)
    }

    pub fn user_with_employee(
        mut self,
        id: &str,
        employee_id: &str,
        name: &str,
        roles: &[&str],
    ) -> Self {
        self = self.directory_entry(employee_id, name, "staff");
        let user_id: UserId = parse(id, "user id");
        self.store
            .users
            .entry(self.current.clone())
            .or_default()
            .insert(
                user_id.clone(),
                User {
                    id: user_id,
                    tenant: self.current.clone(),
                    employee_id: employee_id.to_string(),
                    assigned_roles: roles.iter().map(|r| parse(r, "role id")).collect(),
                },
            );
        self
    }

    pub fn sod(mut self, id: &str, process: &str, tasks: &[&str], mode: SodMode) -> Self {
        self.store.sod_constraints.insert(
            id.to_string(),
            SodConstraint {
                tenant: self.current.clone(),
                process: parse(process, "process id"),
                conflicting_tasks: tasks.iter().map(|t| parse(t, "task id")).collect(),
                mode,
            },
        );
        self
    }

    pub fn build(self) -> PolicyStore {
        self.store
    }
}
