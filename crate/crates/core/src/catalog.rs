//! Server-side catalog reconciliation.
//!
//! A device either uploads its full snapshot, which is reconciled here with
//! [`compute_diff`], or a precomputed [`CatalogDiff`]. Both paths end in
//! [`apply_diff`] and converge to the same stored state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::domain::{CatalogEntry, Decision, DeviceKey, MemberId, PermissionState, Visibility};
use crate::error::{Error, Result};
use crate::journal::{Journal, Record};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionChange {
    pub package: String,
    #[serde(flatten)]
    pub permission: PermissionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityChange {
    pub package: String,
    pub visibility: Visibility,
}

/// Change set between a device snapshot and the stored catalog.
///
/// `added` doubles as replace: an entry for a package that is already stored
/// overwrites it. That is how label changes and dropped permissions travel,
/// since neither can be expressed as a permission or visibility change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogDiff {
    #[serde(default)]
    pub added: Vec<CatalogEntry>,
    #[serde(default)]
    pub removed: Vec<String>,
    #[serde(default)]
    pub permission_changes: Vec<PermissionChange>,
    #[serde(default)]
    pub visibility_changes: Vec<VisibilityChange>,
}

impl CatalogDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.permission_changes.is_empty()
            && self.visibility_changes.is_empty()
    }

    /// Checks the structural invariants that do not depend on the target catalog.
    pub fn validate(&self) -> Result<()> {
        let mut added = BTreeSet::new();
        for entry in &self.added {
            if !added.insert(entry.package.as_str()) {
                return Err(Error::InconsistentDiff(format!(
                    "package `{}` added twice",
                    entry.package
                )));
            }
        }
        let removed: BTreeSet<&str> = self.removed.iter().map(String::as_str).collect();
        if let Some(pkg) = added.intersection(&removed).next() {
            return Err(Error::InconsistentDiff(format!(
                "package `{pkg}` both added and removed"
            )));
        }
        let changed = self
            .permission_changes
            .iter()
            .map(|c| c.package.as_str())
            .chain(self.visibility_changes.iter().map(|c| c.package.as_str()));
        for pkg in changed {
            if removed.contains(pkg) {
                return Err(Error::InconsistentDiff(format!(
                    "package `{pkg}` is removed and changed in the same diff"
                )));
            }
        }
        Ok(())
    }

    /// Counts how this diff affects `base`, by package.
    pub fn summarize(&self, base: &BTreeMap<String, CatalogEntry>) -> DiffSummary {
        let mut changed: BTreeSet<&str> = BTreeSet::new();
        let mut added = 0;
        for entry in &self.added {
            if base.contains_key(&entry.package) {
                changed.insert(&entry.package);
            } else {
                added += 1;
            }
        }
        changed.extend(self.permission_changes.iter().map(|c| c.package.as_str()));
        changed.extend(self.visibility_changes.iter().map(|c| c.package.as_str()));
        DiffSummary {
            added,
            removed: self
                .removed
                .iter()
                .filter(|p| base.contains_key(*p))
                .count(),
            changed: changed.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub added: usize,
    pub removed: usize,
    pub changed: usize,
}

/// The remote copy of one device's catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCatalog {
    pub member_id: MemberId,
    pub device_key: DeviceKey,
    pub entries: BTreeMap<String, CatalogEntry>,
    pub version: u64,
}

impl StoredCatalog {
    pub fn empty(member_id: MemberId, device_key: DeviceKey) -> Self {
        Self {
            member_id,
            device_key,
            entries: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn get(&self, package: &str) -> Option<&CatalogEntry> {
        self.entries.get(package)
    }

    pub fn entry_list(&self) -> Vec<CatalogEntry> {
        self.entries.values().cloned().collect()
    }
}

/// Indexes a snapshot by package, rejecting duplicates.
pub fn snapshot_map(snapshot: &[CatalogEntry]) -> Result<BTreeMap<String, CatalogEntry>> {
    let mut map = BTreeMap::new();
    for entry in snapshot {
        if map.insert(entry.package.clone(), entry.clone()).is_some() {
            return Err(Error::DuplicatePackage(entry.package.clone()));
        }
    }
    Ok(map)
}

/// Minimal diff turning `remote` into `snapshot`.
pub fn compute_diff(snapshot: &[CatalogEntry], remote: &StoredCatalog) -> Result<CatalogDiff> {
    let local = snapshot_map(snapshot)?;
    Ok(diff_maps(&local, &remote.entries))
}

pub(crate) fn diff_maps(
    local: &BTreeMap<String, CatalogEntry>,
    remote: &BTreeMap<String, CatalogEntry>,
) -> CatalogDiff {
    let mut diff = CatalogDiff::default();
    for (package, entry) in local {
        let Some(old) = remote.get(package) else {
            diff.added.push(entry.clone());
            continue;
        };
        if old == entry {
            continue;
        }
        let dropped_permission = old.permissions.keys().any(|p| !entry.permissions.contains_key(p));
        if old.label != entry.label || old.icon != entry.icon || dropped_permission {
            diff.added.push(entry.clone());
            continue;
        }
        for (name, decision) in &entry.permissions {
            if old.permissions.get(name) != Some(decision) {
                diff.permission_changes.push(PermissionChange {
                    package: package.clone(),
                    permission: PermissionState {
                        name: name.clone(),
                        decision: *decision,
                    },
                });
            }
        }
        if old.visibility != entry.visibility {
            diff.visibility_changes.push(VisibilityChange {
                package: package.clone(),
                visibility: entry.visibility,
            });
        }
    }
    diff.removed = remote
        .keys()
        .filter(|p| !local.contains_key(*p))
        .cloned()
        .collect();
    diff
}

/// Applies a diff, returning the new catalog.
///
/// The version moves by one only when the entries actually change, which
/// makes re-applying a diff a no-op. Re-adding an identical entry or
/// removing an absent package is not an error.
pub fn apply_diff(remote: &StoredCatalog, diff: &CatalogDiff) -> Result<StoredCatalog> {
    diff.validate()?;
    let mut entries = remote.entries.clone();
    for package in &diff.removed {
        entries.remove(package);
    }
    for entry in &diff.added {
        entries.insert(entry.package.clone(), entry.clone());
    }
    for change in &diff.permission_changes {
        let entry = entries
            .get_mut(&change.package)
            .ok_or_else(|| Error::UnknownPackage(change.package.clone()))?;
        entry
            .permissions
            .insert(change.permission.name.clone(), change.permission.decision);
    }
    for change in &diff.visibility_changes {
        let entry = entries
            .get_mut(&change.package)
            .ok_or_else(|| Error::UnknownPackage(change.package.clone()))?;
        entry.visibility = change.visibility;
    }
    let version = if entries == remote.entries {
        remote.version
    } else {
        remote.version + 1
    };
    Ok(StoredCatalog {
        member_id: remote.member_id.clone(),
        device_key: remote.device_key,
        entries,
        version,
    })
}

/// Outcome of a catalog mutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncOutcome {
    pub version: u64,
    #[serde(flatten)]
    pub summary: DiffSummary,
}

/// All stored catalogs, one per member device.
///
/// Writers for one member are serialized by that member's write lock;
/// each catalog is swapped in whole, so readers always see a complete version.
#[derive(Default)]
pub struct CatalogStore {
    current: RwLock<HashMap<MemberId, Arc<StoredCatalog>>>,
    writers: Mutex<HashMap<MemberId, Arc<Mutex<()>>>>,
}

impl CatalogStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, member: &MemberId) -> Option<Arc<StoredCatalog>> {
        self.current.read().get(member).cloned()
    }

    /// Consistent view of several catalogs at once.
    pub fn snapshot(&self, members: &[MemberId]) -> HashMap<MemberId, Arc<StoredCatalog>> {
        let current = self.current.read();
        members
            .iter()
            .filter_map(|m| current.get(m).map(|c| (m.clone(), Arc::clone(c))))
            .collect()
    }

    fn writer(&self, member: &MemberId) -> Arc<Mutex<()>> {
        Arc::clone(self.writers.lock().entry(member.clone()).or_default())
    }

    /// Runs `f` against the member's current catalog and stores the result.
    ///
    /// Nothing is journaled or swapped when the version does not move.
    pub fn mutate<F>(
        &self,
        member: &MemberId,
        device_key: DeviceKey,
        journal: &dyn Journal,
        f: F,
    ) -> Result<(Arc<StoredCatalog>, Arc<StoredCatalog>)>
    where
        F: FnOnce(&StoredCatalog) -> Result<StoredCatalog>,
    {
        let writer = self.writer(member);
        let _guard = writer.lock();
        let before = self
            .get(member)
            .unwrap_or_else(|| Arc::new(StoredCatalog::empty(member.clone(), device_key)));
        let after = f(&before)?;
        if after.version == before.version {
            return Ok((Arc::clone(&before), before));
        }
        debug_assert!(after.version > before.version);
        journal.append(&Record::CatalogStored {
            catalog: after.clone(),
        })?;
        let after = Arc::new(after);
        self.current
            .write()
            .insert(member.clone(), Arc::clone(&after));
        Ok((before, after))
    }

    pub fn replace_snapshot(
        &self,
        member: &MemberId,
        device_key: DeviceKey,
        snapshot: &[CatalogEntry],
        journal: &dyn Journal,
    ) -> Result<SyncOutcome> {
        let local = snapshot_map(snapshot)?;
        let mut summary = DiffSummary::default();
        let (_, after) = self.mutate(member, device_key, journal, |remote| {
            let diff = diff_maps(&local, &remote.entries);
            summary = diff.summarize(&remote.entries);
            apply_diff(remote, &diff)
        })?;
        Ok(SyncOutcome {
            version: after.version,
            summary,
        })
    }

    /// Applies a device-computed diff. With `base_version`, the diff is
    /// refused unless it was computed against the stored version.
    pub fn apply(
        &self,
        member: &MemberId,
        device_key: DeviceKey,
        diff: &CatalogDiff,
        base_version: Option<u64>,
        journal: &dyn Journal,
    ) -> Result<SyncOutcome> {
        let mut summary = DiffSummary::default();
        let (_, after) = self.mutate(member, device_key, journal, |remote| {
            if let Some(expected) = base_version {
                if expected != remote.version {
                    return Err(Error::VersionConflict {
                        expected,
                        actual: remote.version,
                    });
                }
            }
            let next = apply_diff(remote, diff)?;
            // Count what really changed, not what the diff claimed.
            summary = diff_maps(&next.entries, &remote.entries).summarize(&remote.entries);
            Ok(next)
        })?;
        Ok(SyncOutcome {
            version: after.version,
            summary,
        })
    }

    pub fn set_visibility(
        &self,
        member: &MemberId,
        device_key: DeviceKey,
        package: &str,
        visibility: Visibility,
        journal: &dyn Journal,
    ) -> Result<u64> {
        let diff = CatalogDiff {
            visibility_changes: vec![VisibilityChange {
                package: package.to_owned(),
                visibility,
            }],
            ..Default::default()
        };
        Ok(self.apply(member, device_key, &diff, None, journal)?.version)
    }

    pub fn set_permission(
        &self,
        member: &MemberId,
        device_key: DeviceKey,
        package: &str,
        permission: &str,
        decision: Decision,
        journal: &dyn Journal,
    ) -> Result<u64> {
        let diff = CatalogDiff {
            permission_changes: vec![PermissionChange {
                package: package.to_owned(),
                permission: PermissionState {
                    name: permission.to_owned(),
                    decision,
                },
            }],
            ..Default::default()
        };
        Ok(self.apply(member, device_key, &diff, None, journal)?.version)
    }

    pub(crate) fn restore(&self, catalog: StoredCatalog) {
        self.current
            .write()
            .insert(catalog.member_id.clone(), Arc::new(catalog));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{derive_device_key, IdentityTriple};
    use crate::journal::NullJournal;

    fn key() -> DeviceKey {
        derive_device_key(&IdentityTriple::new("d", "s", "p")).unwrap()
    }

    fn remote(entries: &[CatalogEntry]) -> StoredCatalog {
        StoredCatalog {
            member_id: MemberId::from("m"),
            device_key: key(),
            entries: snapshot_map(entries).unwrap(),
            version: 7,
        }
    }

    fn app(pkg: &str) -> CatalogEntry {
        CatalogEntry::new(pkg, pkg.to_uppercase())
            .with_permission("android.permission.CAMERA", Decision::Granted)
    }

    #[test]
    fn identical_snapshot_is_empty_diff() {
        let r = remote(&[app("a.x"), app("b.y")]);
        assert!(compute_diff(&[app("a.x"), app("b.y")], &r).unwrap().is_empty());
    }

    #[test]
    fn added_app_only() {
        let r = remote(&[app("a.x")]);
        let diff = compute_diff(&[app("a.x"), app("b.y")], &r).unwrap();
        assert_eq!(
            diff,
            CatalogDiff {
                added: vec![app("b.y")],
                ..Default::default()
            }
        );
    }

    #[test]
    fn duplicate_snapshot_package() {
        let err = compute_diff(&[app("a.x"), app("a.x")], &remote(&[])).unwrap_err();
        assert_eq!(err, Error::DuplicatePackage("a.x".into()));
    }

    #[test]
    fn grant_change_is_single_permission_change() {
        let r = remote(&[app("a.x")]);
        let changed = app("a.x").with_permission("android.permission.CAMERA", Decision::Denied);
        let diff = compute_diff(std::slice::from_ref(&changed), &r).unwrap();
        assert!(diff.added.is_empty() && diff.removed.is_empty());
        assert_eq!(diff.permission_changes.len(), 1);
        assert_eq!(diff.summarize(&r.entries).changed, 1);
        assert_eq!(apply_diff(&r, &diff).unwrap().entries["a.x"], changed);
    }

    #[test]
    fn dropped_permission_travels_as_replacement() {
        let r = remote(&[app("a.x")]);
        let mut stripped = app("a.x");
        stripped.permissions.clear();
        let diff = compute_diff(&[stripped.clone()], &r).unwrap();
        assert_eq!(diff.added, vec![stripped.clone()]);
        let s = diff.summarize(&r.entries);
        assert_eq!((s.added, s.changed), (0, 1));
        assert_eq!(apply_diff(&r, &diff).unwrap().entries["a.x"], stripped);
    }

    #[test]
    fn empty_diff_keeps_version() {
        let r = remote(&[app("a.x")]);
        let after = apply_diff(&r, &CatalogDiff::default()).unwrap();
        assert_eq!(after, r);
    }

    #[test]
    fn double_add_bumps_once() {
        let r = remote(&[]);
        let diff = CatalogDiff {
            added: vec![app("a.x")],
            ..Default::default()
        };
        let once = apply_diff(&r, &diff).unwrap();
        let twice = apply_diff(&once, &diff).unwrap();
        assert_eq!(once.version, r.version + 1);
        assert_eq!(twice, once);
        let rm = CatalogDiff {
            removed: vec!["zz.absent".into()],
            ..Default::default()
        };
        assert_eq!(apply_diff(&once, &rm).unwrap(), once);
    }

    #[test]
    fn change_on_absent_package_errors() {
        let r = remote(&[app("a.x")]);
        let diff = CatalogDiff {
            visibility_changes: vec![VisibilityChange {
                package: "b.y".into(),
                visibility: Visibility::Hidden,
            }],
            ..Default::default()
        };
        assert_eq!(apply_diff(&r, &diff), Err(Error::UnknownPackage("b.y".into())));
    }

    #[test]
    fn inconsistent_diffs_rejected() {
        let r = remote(&[app("a.x")]);
        let both = CatalogDiff {
            added: vec![app("a.x")],
            removed: vec!["a.x".into()],
            ..Default::default()
        };
        assert!(matches!(apply_diff(&r, &both), Err(Error::InconsistentDiff(_))));
        let removed_and_changed = CatalogDiff {
            removed: vec!["a.x".into()],
            visibility_changes: vec![VisibilityChange {
                package: "a.x".into(),
                visibility: Visibility::Hidden,
            }],
            ..Default::default()
        };
        assert!(matches!(
            apply_diff(&r, &removed_and_changed),
            Err(Error::InconsistentDiff(_))
        ));
    }

    #[test]
    fn store_visibility_and_permission_are_isolated() {
        let store = CatalogStore::new();
        let m = MemberId::from("m");
        let j = NullJournal;
        store.replace_snapshot(&m, key(), &[app("a.x")], &j).unwrap();
        let v = store
            .set_visibility(&m, key(), "a.x", Visibility::Hidden, &j)
            .unwrap();
        assert_eq!(v, 2);
        let entry = store.get(&m).unwrap().entries["a.x"].clone();
        assert_eq!(entry.permissions, app("a.x").permissions);
        let v = store
            .set_permission(&m, key(), "a.x", "android.permission.CAMERA", Decision::Denied, &j)
            .unwrap();
        assert_eq!(v, 3);
        let entry = store.get(&m).unwrap().entries["a.x"].clone();
        assert_eq!(entry.visibility, Visibility::Hidden);
        assert_eq!(
            store.set_visibility(&m, key(), "nope", Visibility::Hidden, &j),
            Err(Error::UnknownPackage("nope".into()))
        );
    }

    #[test]
    fn base_version_conflict() {
        let store = CatalogStore::new();
        let m = MemberId::from("m");
        let j = NullJournal;
        store.replace_snapshot(&m, key(), &[app("a.x")], &j).unwrap();
        let diff = CatalogDiff {
            added: vec![app("b.y")],
            ..Default::default()
        };
        assert_eq!(
            store.apply(&m, key(), &diff, Some(0), &j),
            Err(Error::VersionConflict {
                expected: 0,
                actual: 1
            })
        );
        let out = store.apply(&m, key(), &diff, Some(1), &j).unwrap();
        assert_eq!(out.version, 2);
        assert_eq!(out.summary.added, 1);
    }

    #[test]
    fn concurrent_mutations_strictly_increase_version() {
        let store = Arc::new(CatalogStore::new());
        let m = MemberId::from("m");
        let pkgs: Vec<String> = (0..16).map(|i| format!("p{i}.app")).collect();
        store
            .replace_snapshot(&m, key(), &pkgs.iter().map(|p| app(p)).collect::<Vec<_>>(), &NullJournal)
            .unwrap();
        let handles: Vec<_> = pkgs
            .iter()
            .cloned()
            .map(|pkg| {
                let store = Arc::clone(&store);
                let m = m.clone();
                std::thread::spawn(move || {
                    let mut seen = Vec::new();
                    for i in 0..20 {
                        let vis = if i % 2 == 0 { Visibility::Hidden } else { Visibility::Visible };
                        seen.push(store.set_visibility(&m, key(), &pkg, vis, &NullJournal).unwrap());
                    }
                    seen
                })
            })
            .collect();
        let per_thread: Vec<Vec<u64>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        for seen in &per_thread {
            assert!(seen.windows(2).all(|w| w[0] < w[1]));
        }
        let mut all: Vec<u64> = per_thread.into_iter().flatten().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n, "versions must never repeat");
        assert_eq!(store.get(&m).unwrap().version, 1 + n as u64);
    }
}
