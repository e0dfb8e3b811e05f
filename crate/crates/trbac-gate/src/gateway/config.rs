//! Gateway configuration: one JSON file covering the listen address,
//! data directory, session and hashing parameters, the location mapping,
//! and per-tenant administration roles.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::authn::AuthnConfig;
use crate::model::{LocationId, RoleId, TenantId};
use crate::persist::PersistError;

/// How the gateway decides a request's location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationMode {
    /// Trust the location declared in the login body (test and harness
    /// mode, or deployments fronted by a trusted proxy that injects it).
    Declared,
    /// Derive the zone from the peer address via the prefix map.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationConfig {
    pub mode: LocationMode,
    /// Zone assigned when nothing else matches.
    pub default: LocationId,
    /// Peer-address prefix (string match) to zone; longest prefix wins.
    pub map: BTreeMap<String, LocationId>,
}

impl Default for LocationConfig {
    fn default() -> Self {
        LocationConfig {
            mode: LocationMode::Declared,
            default: LocationId::new("unmapped").expect("static id"),
            map: BTreeMap::new(),
        }
    }
}

impl LocationConfig {
    /// Resolve the observed location for a request.
    pub fn observe(&self, declared: Option<&LocationId>, peer: Option<IpAddr>) -> LocationId {
        match self.mode {
            LocationMode::Declared => declared.cloned().unwrap_or_else(|| self.default.clone()),
            LocationMode::Transport => {
                let Some(peer) = peer else {
                    return self.default.clone();
                };
                let peer = peer.to_string();
                self.map
                    .iter()
                    .filter(|(prefix, _)| peer.starts_with(prefix.as_str()))
                    .max_by_key(|(prefix, _)| prefix.len())
                    .map(|(_, zone)| zone.clone())
                    .unwrap_or_else(|| self.default.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Policy file, relative to `data_dir` unless absolute.
    pub policy_file: PathBuf,
    pub session_ttl_secs: u64,
    pub pending_ttl_secs: u64,
    pub hash_iterations: u32,
    pub min_password_len: usize,
    pub location: LocationConfig,
    /// Role whose holders may read a tenant's alert log. Tenants without
    /// an entry have no alert readers (fail closed).
    pub admin_roles: BTreeMap<TenantId, RoleId>,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            listen: "127.0.0.1:8080".to_string(),
            data_dir: PathBuf::from("."),
            policy_file: PathBuf::from("policy.json"),
            session_ttl_secs: 30 * 60,
            pending_ttl_secs: 10 * 60,
            hash_iterations: crate::authn::DEFAULT_ITERATIONS,
            min_password_len: 8,
            location: LocationConfig::default(),
            admin_roles: BTreeMap::new(),
        }
    }
}

impl GateConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| PersistError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&raw).map_err(|e| PersistError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn policy_path(&self) -> PathBuf {
        if self.policy_file.is_absolute() {
            self.policy_file.clone()
        } else {
            self.data_dir.join(&self.policy_file)
        }
    }

    pub fn credentials_path(&self) -> PathBuf {
        self.data_dir.join("credentials.json")
    }

    pub fn instances_path(&self) -> PathBuf {
        self.data_dir.join("instances.json")
    }

    pub fn audit_path(&self) -> PathBuf {
        self.data_dir.join("audit.log")
    }

    pub fn authn(&self) -> AuthnConfig {
        AuthnConfig {
            hash_iterations: self.hash_iterations,
            min_password_len: self.min_password_len,
            pending_ttl_millis: self.pending_ttl_secs * 1_000,
            session_ttl_millis: self.session_ttl_secs * 1_000,
        }
    }
}
