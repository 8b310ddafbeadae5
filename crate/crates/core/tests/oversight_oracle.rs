mod support;

use std::sync::Arc;

use coops_core::clock::SystemClock;
use coops_core::domain::{CatalogEntry, Decision, Visibility};
use coops_core::oversight::{PermissionTallyRow, TallyFilter, TallyScope};
use coops_core::{Coops, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn service() -> Coops {
    Coops::open(ServiceConfig::in_memory(b"test-salt".to_vec()), Arc::new(SystemClock)).unwrap()
}

#[test]
fn random_communities_match_oracle() {
    let coops = service();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..150 {
        let community = random_community(&mut rng);
        check_against_oracle(&coops, &community, &format!("c{i}")).unwrap();
    }
}

/// Hiding an app must look, to every other member, exactly like uninstalling it.
#[test]
fn hiding_is_indistinguishable_from_uninstalling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..60 {
        let community = random_community(&mut rng);
        let owner = rng.random_range(0..community.catalogs.len());
        if community.catalogs[owner].is_empty() {
            continue;
        }
        let idx = rng.random_range(0..community.catalogs[owner].len());

        let mut hidden = community.clone();
        hidden.catalogs[owner][idx].visibility = Visibility::Hidden;
        let mut removed = community.clone();
        removed.catalogs[owner].remove(idx);

        let a = service();
        let b = service();
        let (ca, pa) = materialize(&a, &hidden, &format!("h{round}"));
        let (cb, pb) = materialize(&b, &removed, &format!("h{round}"));
        for viewer in (0..pa.len()).filter(|v| *v != owner) {
            assert_eq!(
                a.community_apps(&pa[viewer], &ca).unwrap(),
                b.community_apps(&pb[viewer], &cb).unwrap()
            );
            for target in 0..pa.len() {
                assert_eq!(
                    a.member_apps(&pa[viewer], &ca, &pa[target].member_id).unwrap(),
                    b.member_apps(&pb[viewer], &cb, &pb[target].member_id).unwrap()
                );
            }
            for package in &community.packages {
                for filter in [TallyFilter::All, TallyFilter::Granted, TallyFilter::Denied] {
                    let ra = a.permission_tally(&pa[viewer], &ca, package, &TallyScope::Community, filter);
                    let rb = b.permission_tally(&pb[viewer], &cb, package, &TallyScope::Community, filter);
                    assert_eq!(ra, rb);
                }
            }
        }
    }
}

#[test]
fn filters_partition_rows() {
    let coops = service();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..40 {
        let community = random_community(&mut rng);
        let (cid, principals) = materialize(&coops, &community, &format!("f{i}"));
        for p in &principals {
            for package in &community.packages {
                let Ok(all) = coops.permission_tally(p, &cid, package, &TallyScope::Community, TallyFilter::All) else {
                    continue;
                };
                let granted = coops.permission_tally(p, &cid, package, &TallyScope::Community, TallyFilter::Granted).unwrap();
                let denied = coops.permission_tally(p, &cid, package, &TallyScope::Community, TallyFilter::Denied).unwrap();
                for row in &all {
                    assert!(row.granted_count + row.denied_count >= 1);
                    assert!(row.granted_count + row.denied_count <= row.total);
                    assert!(granted.contains(row) || denied.contains(row));
                }
                assert!(granted.iter().chain(&denied).all(|r| all.contains(r)));
            }
        }
    }
}

#[test]
fn adding_a_visible_installer_never_decreases_counts() {
    let coops = service();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..40 {
        let community = random_community(&mut rng);
        let (cid, principals) = materialize(&coops, &community, &format!("m{i}"));
        let viewer = &principals[0];
        let before = coops.community_apps(viewer, &cid).unwrap();
        let tallies_before: Vec<_> = community
            .packages
            .iter()
            .map(|p| coops.permission_tally(viewer, &cid, p, &TallyScope::Community, TallyFilter::All).ok())
            .collect();

        // Some member visibly installs every package, with one permission.
        let adder = rng.random_range(0..principals.len());
        let mut catalog = community.catalogs[adder].clone();
        for package in &community.packages {
            if !catalog.iter().any(|e| &e.package == package) {
                catalog.push(
                    CatalogEntry::new(package.clone(), "New")
                        .with_permission("android.permission.CAMERA", Decision::Granted),
                );
            }
        }
        coops.upload_snapshot(&principals[adder], &catalog).unwrap();

        let after = coops.community_apps(viewer, &cid).unwrap();
        for row in &before {
            let new = after.iter().find(|r| r.package == row.package).unwrap();
            assert!(new.installer_count >= row.installer_count);
        }
        for (package, old) in community.packages.iter().zip(tallies_before) {
            let new = coops
                .permission_tally(viewer, &cid, package, &TallyScope::Community, TallyFilter::All)
                .ok();
            if let Some(old) = old {
                let new = new.expect("a visible app stays visible");
                let total = |rows: &[PermissionTallyRow]| rows.first().map_or(0, |r| r.total);
                assert!(total(&new) >= total(&old));
            }
        }
    }
}
