//! Multi-tenant policy domain: identifiers, the policy store, pure
//! resolution rules, and load-time validation.
//!
//! Everything here is side-effect free over an immutable store snapshot
//! and safe for unlimited concurrent use.

pub mod builder;
mod id;
mod resolve;
mod store;
mod validate;

pub use builder::StoreBuilder;
pub use id::{
    IdError, InstanceId, LocationId, ObjectId, ProcessId, RoleId, TaskId, TenantId, UserId,
};
pub use resolve::{
    permitted_tasks, resolve_effective_roles, role_closure, strictly_senior, ResolveError,
};
pub use store::{
    AlertSinkSpec, DirectoryEntry, Permission, PolicyStore, Role, SodConstraint, SodMode, TaskDef,
    Tenant, User,
};
pub use validate::{validate_policy, Diagnostic};
