//! Random community generator and brute-force oracle for the oversight
//! queries. The oracle works package-by-package and member-by-member over the
//! raw catalogs; it shares no code with the query implementation.

#![allow(dead_code)]

use std::collections::BTreeSet;

use coops_core::directory::Principal;
use coops_core::domain::{CatalogEntry, CommunityId, Decision, IdentityTriple, MemberId, Visibility};
use coops_core::oversight::{CommunityAppRow, PermissionTallyRow, TallyFilter};
use coops_core::Coops;
use rand::Rng;

pub const MAX_MEMBERS: usize = 5;
pub const MAX_APPS: usize = 20;
pub const MAX_PERMISSIONS: usize = 10;

pub const PERMISSION_POOL: [&str; MAX_PERMISSIONS] = [
    "android.permission.CAMERA",
    "android.permission.READ_CONTACTS",
    "android.permission.ACCESS_FINE_LOCATION",
    "android.permission.RECORD_AUDIO",
    "android.permission.READ_SMS",
    "android.permission.INTERNET",
    "android.permission.READ_CALENDAR",
    "android.permission.POST_NOTIFICATIONS",
    "android.permission.BODY_SENSORS",
    "com.vendor.permission.CUSTOM",
];

/// Raw catalogs of a randomly generated community, member order = join order.
#[derive(Debug, Clone)]
pub struct RandomCommunity {
    pub catalogs: Vec<Vec<CatalogEntry>>,
    pub packages: Vec<String>,
}

pub fn random_community(rng: &mut impl Rng) -> RandomCommunity {
    let members = rng.random_range(1..=MAX_MEMBERS);
    let app_count = rng.random_range(1..=MAX_APPS);
    let perm_count = rng.random_range(1..=MAX_PERMISSIONS);
    let packages: Vec<String> = (0..app_count).map(|i| format!("com.app{i:02}.pkg")).collect();
    let hidden_rate = rng.random_range(0.0..0.6);

    let catalogs = (0..members)
        .map(|_| {
            let installed: Vec<(usize, &String)> =
                packages.iter().enumerate().filter(|_| rng.random_bool(0.5)).collect();
            installed
                .into_iter()
                .map(|(i, package)| {
                    // Mostly a shared label, sometimes a device-specific one.
                    let label = if rng.random_bool(0.15) {
                        format!("App {i:02} ({})", rng.random_range(0..3))
                    } else {
                        format!("App {i:02}")
                    };
                    let mut entry = CatalogEntry::new(package.clone(), label);
                    if rng.random_bool(hidden_rate) {
                        entry.visibility = Visibility::Hidden;
                    }
                    for perm in PERMISSION_POOL.iter().take(perm_count) {
                        if rng.random_bool(0.5) {
                            let decision = if rng.random_bool(0.5) {
                                Decision::Granted
                            } else {
                                Decision::Denied
                            };
                            entry.permissions.insert(perm.to_string(), decision);
                        }
                    }
                    entry
                })
                .collect()
        })
        .collect();
    RandomCommunity { catalogs, packages }
}

/// Registers every member, forms one community and uploads each catalog.
pub fn materialize(coops: &Coops, community: &RandomCommunity, tag: &str) -> (CommunityId, Vec<Principal>) {
    let principals: Vec<Principal> = (0..community.catalogs.len())
        .map(|i| {
            let triple = IdentityTriple::new(
                format!("{tag}-dev-{i}"),
                format!("{tag}-sim-{i}"),
                format!("{tag}-plat-{i}"),
            );
            let reg = coops.register(&triple, &format!("Member {i}")).unwrap();
            coops.authenticate(&reg.token).unwrap()
        })
        .collect();
    let created = coops.create_community(&principals[0], tag).unwrap();
    for p in &principals[1..] {
        coops.join_community(p, &created.invite_code).unwrap();
    }
    for (p, catalog) in principals.iter().zip(&community.catalogs) {
        coops.upload_snapshot(p, catalog).unwrap();
    }
    (created.community_id, principals)
}

fn entry<'a>(community: &'a RandomCommunity, member: usize, package: &str) -> Option<&'a CatalogEntry> {
    community.catalogs[member].iter().find(|e| e.package == package)
}

fn sees(community: &RandomCommunity, viewer: usize, member: usize, package: &str) -> Option<CatalogEntry> {
    let e = entry(community, member, package)?;
    (viewer == member || e.visibility == Visibility::Visible).then(|| e.clone())
}

pub fn oracle_community_apps(community: &RandomCommunity, viewer: usize) -> Vec<CommunityAppRow> {
    let mut rows = Vec::new();
    for package in &community.packages {
        let mut installs = Vec::new();
        for member in 0..community.catalogs.len() {
            if let Some(e) = sees(community, viewer, member, package) {
                installs.push(e);
            }
        }
        if installs.is_empty() {
            continue;
        }
        let own = entry(community, viewer, package);
        let label = match own {
            Some(e) => e.label.clone(),
            None => installs.iter().map(|e| e.label.clone()).min().unwrap(),
        };
        rows.push(CommunityAppRow {
            package: package.clone(),
            label,
            installer_count: installs.len(),
            viewer_installed: own.is_some(),
        });
    }
    rows.sort_by(|a, b| {
        (std::cmp::Reverse(a.installer_count), &a.label, &a.package)
            .cmp(&(std::cmp::Reverse(b.installer_count), &b.label, &b.package))
    });
    rows
}

/// Expected (package, visibility-if-owner, permissions) for an explore view.
pub type ExploreRow = (String, Option<Visibility>, Vec<(String, Decision)>);

pub fn oracle_member_apps(community: &RandomCommunity, viewer: usize, target: usize) -> Vec<ExploreRow> {
    let mut out: Vec<_> = community.catalogs[target]
        .iter()
        .filter(|e| viewer == target || e.visibility == Visibility::Visible)
        .map(|e| {
            (
                e.package.clone(),
                (viewer == target).then_some(e.visibility),
                e.permissions.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Expected (permission, granted, denied, total) rows, or `None` when the
/// package is not visible in scope.
pub fn oracle_tally(
    community: &RandomCommunity,
    viewer: usize,
    package: &str,
    scope_member: Option<usize>,
    filter: TallyFilter,
) -> Option<Vec<(String, usize, usize, usize)>> {
    let scope: Vec<usize> = match scope_member {
        Some(m) => vec![m],
        None => (0..community.catalogs.len()).collect(),
    };
    let installs: Vec<CatalogEntry> = scope
        .iter()
        .filter_map(|&m| sees(community, viewer, m, package))
        .collect();
    if installs.is_empty() {
        return None;
    }
    let names: BTreeSet<&String> = installs.iter().flat_map(|e| e.permissions.keys()).collect();
    let mut rows = Vec::new();
    for name in names {
        let granted = installs
            .iter()
            .filter(|e| e.permissions.get(name) == Some(&Decision::Granted))
            .count();
        let denied = installs
            .iter()
            .filter(|e| e.permissions.get(name) == Some(&Decision::Denied))
            .count();
        let keep = match filter {
            TallyFilter::All => true,
            TallyFilter::Granted => granted >= 1,
            TallyFilter::Denied => denied >= 1,
        };
        if keep {
            rows.push((name.clone(), granted, denied, installs.len()));
        }
    }
    Some(rows)
}

pub fn tally_tuples(rows: &[PermissionTallyRow]) -> Vec<(String, usize, usize, usize)> {
    rows.iter()
        .map(|r| (r.permission.clone(), r.granted_count, r.denied_count, r.total))
        .collect()
}

/// Packages hidden by members other than `viewer` and not visibly installed
/// by anyone else; these must never surface in the viewer's results.
pub fn hidden_only_packages(community: &RandomCommunity, viewer: usize) -> Vec<String> {
    community
        .packages
        .iter()
        .filter(|p| {
            (0..community.catalogs.len()).all(|m| sees(community, viewer, m, p).is_none())
                && (0..community.catalogs.len()).any(|m| entry(community, m, p).is_some())
        })
        .cloned()
        .collect()
}

pub fn member_id(principals: &[Principal], i: usize) -> MemberId {
    principals[i].member_id.clone()
}

/// Materializes `community` in `coops` and compares every viewer's query
/// results with the oracle. Returns the number of individual comparisons.
pub fn check_against_oracle(coops: &Coops, community: &RandomCommunity, tag: &str) -> Result<usize, String> {
    let (cid, principals) = materialize(coops, community, tag);
    let n = principals.len();
    let mut checks = 0;
    for viewer in 0..n {
        let caller = &principals[viewer];
        let leaked = hidden_only_packages(community, viewer);

        let apps = coops.community_apps(caller, &cid).map_err(|e| e.to_string())?;
        let expected = oracle_community_apps(community, viewer);
        if apps != expected {
            return Err(format!("{tag}: community_apps for viewer {viewer}: {apps:?} != {expected:?}"));
        }
        if let Some(row) = apps.iter().find(|r| leaked.contains(&r.package)) {
            return Err(format!("{tag}: hidden package {} leaked to viewer {viewer}", row.package));
        }
        checks += 1;

        for target in 0..n {
            let views = coops
                .member_apps(caller, &cid, &member_id(&principals, target))
                .map_err(|e| e.to_string())?;
            let mut got: Vec<_> = views
                .iter()
                .map(|v| {
                    (
                        v.package.clone(),
                        v.visibility,
                        v.permissions.iter().map(|p| (p.name.clone(), p.decision)).collect::<Vec<_>>(),
                    )
                })
                .collect();
            got.sort_by(|a, b| a.0.cmp(&b.0));
            let expected = oracle_member_apps(community, viewer, target);
            if got != expected {
                return Err(format!("{tag}: member_apps viewer {viewer} target {target}: {got:?} != {expected:?}"));
            }
            if viewer != target && views.iter().any(|v| v.visibility.is_some()) {
                return Err(format!("{tag}: visibility flag exposed to non-owner"));
            }
            checks += 1;
        }

        for package in &community.packages {
            let scopes = std::iter::once(None).chain((0..n).map(Some));
            for scope_member in scopes {
                for filter in [TallyFilter::All, TallyFilter::Granted, TallyFilter::Denied] {
                    let scope = match scope_member {
                        None => coops_core::oversight::TallyScope::Community,
                        Some(m) => coops_core::oversight::TallyScope::Member(member_id(&principals, m)),
                    };
                    let got = coops.permission_tally(caller, &cid, package, &scope, filter);
                    let expected = oracle_tally(community, viewer, package, scope_member, filter);
                    match (got, expected) {
                        (Ok(rows), Some(exp)) => {
                            let rows = tally_tuples(&rows);
                            if rows != exp {
                                return Err(format!(
                                    "{tag}: tally {package} viewer {viewer} scope {scope_member:?} {filter:?}: {rows:?} != {exp:?}"
                                ));
                            }
                        }
                        (Err(coops_core::Error::PackageNotVisible(_)), None) => {}
                        (got, exp) => {
                            return Err(format!(
                                "{tag}: tally {package} viewer {viewer} scope {scope_member:?}: {got:?} vs oracle {exp:?}"
                            ))
                        }
                    }
                    checks += 1;
                }
            }
        }
    }
    Ok(checks)
}
