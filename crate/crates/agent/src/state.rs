use std::collections::BTreeMap;
use std::path::Path;

use coops_core::catalog::{snapshot_map, StoredCatalog};
use coops_core::domain::{derive_device_key, CatalogEntry, CommunityId, IdentityTriple, MemberId};
use serde::{Deserialize, Serialize};

use crate::AgentError;

/// Everything the simulated device keeps between commands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub server: String,
    pub identity: IdentityTriple,
    pub display_name: String,
    pub token: String,
    pub member_id: MemberId,
    /// Community used when a command does not name one.
    #[serde(default)]
    pub community: Option<CommunityId>,
    /// What is installed on the device, keyed by package.
    #[serde(default, with = "entry_list")]
    pub catalog: BTreeMap<String, CatalogEntry>,
    /// The catalog as of the last successful sync.
    #[serde(default, with = "entry_list")]
    pub synced: BTreeMap<String, CatalogEntry>,
    #[serde(default)]
    pub synced_version: u64,
}

impl AgentState {
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::State(format!("{}: {e} (run `init` first)", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AgentError::State(format!("{}: {e}", path.display())))
    }

    /// Writes through a temporary file so a crash never leaves a torn state file.
    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text + "\n")
            .and_then(|()| std::fs::rename(&tmp, path))
            .map_err(|e| AgentError::State(format!("{}: {e}", path.display())))
    }

    pub fn catalog_list(&self) -> Vec<CatalogEntry> {
        self.catalog.values().cloned().collect()
    }

    /// The server's copy as this device last saw it, used as the diff base.
    pub fn remote_mirror(&self) -> Result<StoredCatalog, AgentError> {
        Ok(StoredCatalog {
            member_id: self.member_id.clone(),
            device_key: derive_device_key(&self.identity)?,
            entries: self.synced.clone(),
            version: self.synced_version,
        })
    }
}

/// Reads a catalog snapshot file: a JSON array of catalog entries.
pub fn read_catalog_file(path: &Path) -> Result<BTreeMap<String, CatalogEntry>, AgentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AgentError::Usage(format!("{}: {e}", path.display())))?;
    let entries: Vec<CatalogEntry> = serde_json::from_str(&text)
        .map_err(|e| AgentError::Usage(format!("{}: {e}", path.display())))?;
    Ok(snapshot_map(&entries)?)
}

mod entry_list {
    use std::collections::BTreeMap;

    use coops_core::domain::CatalogEntry;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<String, CatalogEntry>, s: S) -> Result<S::Ok, S::Error> {
        map.values().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, CatalogEntry>, D::Error> {
        let entries = Vec::<CatalogEntry>::deserialize(d)?;
        coops_core::catalog::snapshot_map(&entries).map_err(serde::de::Error::custom)
    }
}
