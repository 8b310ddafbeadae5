//! Shared domain values. Everything here is an immutable value type; the
//! functions are pure.

mod identity;
mod mask;
mod permissions;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use identity::{derive_device_key, DeviceIdentity, DeviceKey, IdentityTriple};
pub use mask::{mask_catalog, AppView};
pub use permissions::{PermissionDictionary, PermissionInfo, ProtectionLevel, UNKNOWN_DESCRIPTION};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Service-wide unique member id.
    MemberId
);
string_id!(CommunityId);

impl MemberId {
    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }
}

impl CommunityId {
    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    #[default]
    Visible,
    Hidden,
}

impl Visibility {
    pub fn is_visible(self) -> bool {
        self == Visibility::Visible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Granted,
    Denied,
}

/// One permission decision of one app.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermissionState {
    pub name: String,
    pub decision: Decision,
}

/// One installed app on one device.
///
/// Permissions are keyed by name, so an entry can never carry two states for
/// the same permission. On the wire they are a list of `{name, decision}`;
/// a list naming a permission twice is rejected during deserialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub package: String,
    pub label: String,
    #[serde(default)]
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
    #[serde(
        default,
        serialize_with = "serialize_permissions",
        deserialize_with = "deserialize_permissions"
    )]
    pub permissions: BTreeMap<String, Decision>,
}

impl CatalogEntry {
    pub fn new(package: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            package: package.into(),
            label: label.into(),
            visibility: Visibility::Visible,
            icon: None,
            permissions: BTreeMap::new(),
        }
    }

    pub fn with_visibility(mut self, visibility: Visibility) -> Self {
        self.visibility = visibility;
        self
    }

    pub fn with_permission(mut self, name: impl Into<String>, decision: Decision) -> Self {
        self.permissions.insert(name.into(), decision);
        self
    }

    pub fn permission_states(&self) -> impl Iterator<Item = PermissionState> + '_ {
        self.permissions.iter().map(|(name, decision)| PermissionState {
            name: name.clone(),
            decision: *decision,
        })
    }
}

pub(crate) fn serialize_permissions<S: Serializer>(
    permissions: &BTreeMap<String, Decision>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Ref<'a> {
        name: &'a str,
        decision: Decision,
    }
    serializer.collect_seq(permissions.iter().map(|(name, decision)| Ref {
        name,
        decision: *decision,
    }))
}

pub(crate) fn deserialize_permissions<'de, D: Deserializer<'de>>(
    deserializer: D,
) -> Result<BTreeMap<String, Decision>, D::Error> {
    let states = Vec::<PermissionState>::deserialize(deserializer)?;
    let mut map = BTreeMap::new();
    for state in states {
        if map.insert(state.name.clone(), state.decision).is_some() {
            return Err(serde::de::Error::custom(format!(
                "permission `{}` listed more than once",
                state.name
            )));
        }
    }
    Ok(map)
}

/// A member as seen within one community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRef {
    pub member_id: MemberId,
    pub display_name: String,
    pub community_id: CommunityId,
    /// Opaque reference to a profile picture, if the member set one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar: Option<String>,
}
