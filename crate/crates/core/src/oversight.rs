//! Read-side community queries, all computed through the masking rule: a
//! member's hidden entry exists only for that member.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::StoredCatalog;
use crate::domain::{
    mask_catalog, AppView, CatalogEntry, Decision, MemberId, PermissionDictionary, ProtectionLevel,
};
use crate::error::{Error, Result};

/// Member catalogs of one community, captured at a single point in time.
#[derive(Debug, Clone, Default)]
pub struct CommunitySnapshot {
    pub members: Vec<MemberId>,
    pub catalogs: HashMap<MemberId, Arc<StoredCatalog>>,
}

impl CommunitySnapshot {
    fn entries_of<'a>(&'a self, member: &MemberId) -> impl Iterator<Item = &'a CatalogEntry> + 'a {
        self.catalogs
            .get(member)
            .into_iter()
            .flat_map(|c| c.entries.values())
    }

    /// The member's entry for `package` if `viewer` is allowed to see it.
    fn visible_entry(&self, member: &MemberId, package: &str, viewer: &MemberId) -> Option<&CatalogEntry> {
        let entry = self.catalogs.get(member)?.entries.get(package)?;
        (member == viewer || entry.visibility.is_visible()).then_some(entry)
    }

    fn contains(&self, member: &MemberId) -> bool {
        self.members.contains(member)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityAppRow {
    pub package: String,
    pub label: String,
    pub installer_count: usize,
    pub viewer_installed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionTallyRow {
    pub permission: String,
    pub description: String,
    pub protection_level: ProtectionLevel,
    pub granted_count: usize,
    pub denied_count: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TallyScope {
    Community,
    Member(MemberId),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TallyFilter {
    #[default]
    All,
    Granted,
    Denied,
}

/// Every app installed in the community, as `viewer` is allowed to see it.
///
/// Rows are sorted by descending installer count, then label, then package.
/// The label shown is the viewer's own label when installed, otherwise the
/// smallest label among the counted installs.
pub fn community_apps(snapshot: &CommunitySnapshot, viewer: &MemberId) -> Vec<CommunityAppRow> {
    let mut rows: BTreeMap<&str, CommunityAppRow> = BTreeMap::new();
    for member in &snapshot.members {
        let own = member == viewer;
        for entry in snapshot.entries_of(member) {
            if !own && !entry.visibility.is_visible() {
                continue;
            }
            let row = rows
                .entry(entry.package.as_str())
                .or_insert_with(|| CommunityAppRow {
                    package: entry.package.clone(),
                    label: entry.label.clone(),
                    installer_count: 0,
                    viewer_installed: false,
                });
            row.installer_count += 1;
            if own {
                row.viewer_installed = true;
                row.label = entry.label.clone();
            } else if !row.viewer_installed && entry.label < row.label {
                row.label = entry.label.clone();
            }
        }
    }
    let mut rows: Vec<_> = rows.into_values().collect();
    rows.sort_by(|a, b| {
        b.installer_count
            .cmp(&a.installer_count)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.package.cmp(&b.package))
    });
    rows
}

/// One member's catalog as `viewer` may see it.
pub fn member_apps(
    snapshot: &CommunitySnapshot,
    viewer: &MemberId,
    target: &MemberId,
) -> Result<Vec<AppView>> {
    if !snapshot.contains(viewer) {
        return Err(Error::NotAMember);
    }
    if !snapshot.contains(target) {
        return Err(Error::TargetNotInCommunity);
    }
    let owner = viewer == target;
    let entries = snapshot
        .catalogs
        .get(target)
        .map(|c| c.entry_list())
        .unwrap_or_default();
    Ok(mask_catalog(&entries, owner)
        .iter()
        .map(|e| AppView::project(e, owner))
        .collect())
}

/// Grant/deny counts per permission of one app over the installs in scope
/// that `viewer` can see. `total` is the number of those installs.
pub fn permission_tally(
    snapshot: &CommunitySnapshot,
    viewer: &MemberId,
    package: &str,
    scope: &TallyScope,
    filter: TallyFilter,
    dictionary: &PermissionDictionary,
) -> Result<Vec<PermissionTallyRow>> {
    if !snapshot.contains(viewer) {
        return Err(Error::NotAMember);
    }
    let installs: Vec<&CatalogEntry> = match scope {
        TallyScope::Community => snapshot
            .members
            .iter()
            .filter_map(|m| snapshot.visible_entry(m, package, viewer))
            .collect(),
        TallyScope::Member(target) => {
            if !snapshot.contains(target) {
                return Err(Error::TargetNotInCommunity);
            }
            snapshot
                .visible_entry(target, package, viewer)
                .into_iter()
                .collect()
        }
    };
    if installs.is_empty() {
        return Err(Error::PackageNotVisible(package.to_owned()));
    }

    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for entry in &installs {
        for (name, decision) in &entry.permissions {
            let slot = counts.entry(name.as_str()).or_default();
            match decision {
                Decision::Granted => slot.0 += 1,
                Decision::Denied => slot.1 += 1,
            }
        }
    }
    let total = installs.len();
    Ok(counts
        .into_iter()
        .filter(|(_, (granted, denied))| match filter {
            TallyFilter::All => true,
            TallyFilter::Granted => *granted > 0,
            TallyFilter::Denied => *denied > 0,
        })
        .map(|(name, (granted_count, denied_count))| {
            let info = dictionary.lookup(name);
            PermissionTallyRow {
                permission: info.name,
                description: info.description,
                protection_level: info.protection_level,
                granted_count,
                denied_count,
                total,
            }
        })
        .collect())
}
