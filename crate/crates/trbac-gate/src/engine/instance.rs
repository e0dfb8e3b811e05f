//! Runtime task instances and the serializable engine state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{InstanceId, RoleId, TaskId, TenantId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceState {
    /// Holds live permissions; each permit consumes one use.
    Active,
    /// Usage limit reached; permissions are deactivated.
    Deactivated,
    /// Finished; rights revoked for good.
    Completed,
}

/// One recorded reassignment of an instance: `by` is the senior role the
/// actor delegated under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegationHop {
    pub from: UserId,
    pub to: UserId,
    pub by: RoleId,
}

/// A runtime activation of a task by one user.
///
/// Invariants maintained by the engine:
/// - `usage_count` never exceeds the task's usage limit;
/// - `state` is `Deactivated` exactly when the count has hit the limit
///   and the instance is not completed;
/// - `holder` is the last hop's `to`, or the activating user while the
///   delegation chain is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: InstanceId,
    pub tenant: TenantId,
    pub task: TaskId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_instance: Option<String>,
    pub holder: UserId,
    pub state: InstanceState,
    pub usage_count: u32,
    #[serde(default)]
    pub delegation_chain: Vec<DelegationHop>,
}

/// Tasks each user has held, per tenant and process instance. Holding is
/// what dynamic separation of duty constrains; the association persists
/// after completion.
pub type SodHistory = BTreeMap<TenantId, BTreeMap<String, BTreeMap<UserId, BTreeSet<TaskId>>>>;

/// Snapshot of all engine-held state; what `instances.json` persists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub instances: BTreeMap<InstanceId, TaskInstance>,
    pub sod_history: SodHistory,
}
