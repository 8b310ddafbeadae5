use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Description used for permissions missing from the dictionary.
pub const UNKNOWN_DESCRIPTION: &str = "No description available";

const BUILTIN: &str = include_str!("../../data/permissions.json");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionLevel {
    #[default]
    Normal,
    Dangerous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionInfo {
    pub name: String,
    pub description: String,
    pub protection_level: ProtectionLevel,
}

/// Lookup table of known Android permissions.
///
/// Lookups are total: names missing from the table resolve to a generic
/// `normal` entry so apps with vendor-specific permissions are never rejected.
#[derive(Debug, Clone)]
pub struct PermissionDictionary {
    by_name: HashMap<String, PermissionInfo>,
}

impl PermissionDictionary {
    /// The dictionary shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("shipped permission dictionary is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let infos: Vec<PermissionInfo> = serde_json::from_str(text)
            .map_err(|e| Error::InvalidData(format!("permission dictionary: {e}")))?;
        Self::from_entries(infos)
    }

    pub fn from_entries(infos: Vec<PermissionInfo>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(infos.len());
        for info in infos {
            if info.description.trim().is_empty() {
                return Err(Error::InvalidData(format!(
                    "permission `{}` has an empty description",
                    info.name
                )));
            }
            if let Some(dup) = by_name.insert(info.name.clone(), info) {
                return Err(Error::InvalidData(format!(
                    "permission `{}` defined twice",
                    dup.name
                )));
            }
        }
        Ok(Self { by_name })
    }

    pub fn get(&self, name: &str) -> Option<&PermissionInfo> {
        self.by_name.get(name)
    }

    pub fn lookup(&self, name: &str) -> PermissionInfo {
        self.get(name).cloned().unwrap_or_else(|| PermissionInfo {
            name: name.to_owned(),
            description: UNKNOWN_DESCRIPTION.to_owned(),
            protection_level: ProtectionLevel::Normal,
        })
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}

impl Default for PermissionDictionary {
    fn default() -> Self {
        Self::builtin()
    }
}
