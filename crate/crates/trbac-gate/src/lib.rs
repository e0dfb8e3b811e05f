//! trbac-gate: a multi-tenant authorization gateway combining password
//! authentication with a task-role-based access control engine.
//!
//! Users reach permissions only through roles that grant tasks, and only
//! while a task instance is active: each successful authorization
//! consumes one use of the instance, and at the usage limit its
//! permissions deactivate. Denied requests raise per-tenant alerts.
//!
//! The crate is organized as:
//! - [`model`] — tenants, users, roles, tasks, permissions, SoD
//!   constraints; pure resolution and validation.
//! - [`authn`] — registration against the tenant directory, salted
//!   iterated password hashing, session issuance.
//! - [`engine`] — the decision point: task activation, usage accounting,
//!   location checks, dynamic separation of duty, delegation, and
//!   least-privilege auditing.
//! - [`alert`] — per-tenant alert records and delivery sinks.
//! - [`gateway`] — the enforcement point: HTTP endpoints orchestrating
//!   the modules above.
//! - [`persist`] — file-backed policy, credential, instance, and audit
//!   storage.
//!
//! See the crate `examples/` directory for one runnable walk-through per
//! capability.

pub mod alert;
pub mod authn;
pub mod engine;
pub mod gateway;
pub mod model;
pub mod persist;
pub mod time;
