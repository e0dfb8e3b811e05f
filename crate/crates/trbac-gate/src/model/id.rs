//! Opaque identifier newtypes for the policy domain.
//!
//! Identifiers are non-empty strings without whitespace or path
//! separators. The path-separator ban lets ids be embedded safely in
//! file names (per-tenant alert logs) and composite map keys.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("identifier is empty")]
    Empty,
    #[error("identifier {0:?} contains whitespace")]
    Whitespace(String),
    #[error("identifier {0:?} contains a path separator")]
    PathSeparator(String),
}

fn check_id(raw: &str) -> Result<(), IdError> {
    if raw.is_empty() {
        return Err(IdError::Empty);
    }
    if raw.chars().any(char::is_whitespace) {
        return Err(IdError::Whitespace(raw.to_string()));
    }
    if raw.contains('/') || raw.contains('\\') {
        return Err(IdError::PathSeparator(raw.to_string()));
    }
    Ok(())
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Result<Self, IdError> {
                let raw = raw.into();
                check_id(&raw)?;
                Ok(Self(raw))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = IdError;
            fn try_from(raw: String) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl std::str::FromStr for $name {
            type Err = IdError;
            fn from_str(raw: &str) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_type!(
    /// A customer organization; the isolation boundary for all policy data.
    TenantId
);
id_type!(
    /// A user of a tenant. Unique within its tenant, not across the store.
    UserId
);
id_type!(
    /// A role within a tenant.
    RoleId
);
id_type!(
    /// A task definition within a tenant.
    TaskId
);
id_type!(
    /// A protected resource named by permissions.
    ObjectId
);
id_type!(
    /// A network/geographic zone as seen by the gateway.
    LocationId
);
id_type!(
    /// A business process grouping tasks for separation-of-duty purposes.
    ProcessId
);
id_type!(
    /// A runtime task instance.
    InstanceId
);

impl InstanceId {
    /// Fresh random instance id.
    pub fn random() -> Self {
        InstanceId(uuid::Uuid::new_v4().to_string())
    }
}
