use serde::{Deserialize, Serialize};

use super::{CatalogEntry, PermissionState, Visibility};

/// Returns the entries of a catalog a viewer may see.
///
/// Owners get every entry. Anyone else gets only visible entries, in the
/// original order. Non-owners must then be shown [`AppView`]s projected with
/// `owner_view = false`, which carry no visibility flag at all: a hidden app
/// and an app that is not installed look the same.
pub fn mask_catalog(entries: &[CatalogEntry], viewer_is_owner: bool) -> Vec<CatalogEntry> {
    if viewer_is_owner {
        return entries.to_vec();
    }
    entries
        .iter()
        .filter(|e| e.visibility.is_visible())
        .cloned()
        .collect()
}

/// Wire projection of a catalog entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppView {
    pub package: String,
    pub label: String,
    /// Present only in the owner's own view.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Visibility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
    pub permissions: Vec<PermissionState>,
}

impl AppView {
    pub fn project(entry: &CatalogEntry, owner_view: bool) -> Self {
        Self {
            package: entry.package.clone(),
            label: entry.label.clone(),
            visibility: owner_view.then_some(entry.visibility),
            icon: entry.icon.clone(),
            permissions: entry.permission_states().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Decision;
    use proptest::prelude::*;

    fn sample() -> Vec<CatalogEntry> {
        vec![
            CatalogEntry::new("a.app", "A"),
            CatalogEntry::new("b.app", "B").with_visibility(Visibility::Hidden),
        ]
    }

    #[test]
    fn owner_sees_everything() {
        assert_eq!(mask_catalog(&sample(), true), sample());
    }

    #[test]
    fn non_owner_sees_visible_only() {
        let masked = mask_catalog(&sample(), false);
        assert_eq!(masked.len(), 1);
        assert_eq!(masked[0].package, "a.app");
    }

    #[test]
    fn empty_catalog() {
        assert!(mask_catalog(&[], false).is_empty());
        assert!(mask_catalog(&[], true).is_empty());
    }

    #[test]
    fn non_owner_projection_has_no_visibility_key() {
        let entry = CatalogEntry::new("a.app", "A").with_permission("p", Decision::Granted);
        let json = serde_json::to_value(AppView::project(&entry, false)).unwrap();
        assert!(json.get("visibility").is_none());
        let json = serde_json::to_value(AppView::project(&entry, true)).unwrap();
        assert_eq!(json["visibility"], "visible");
    }

    fn arb_entry() -> impl Strategy<Value = CatalogEntry> {
        ("[a-e]\\.[a-e]{1,3}", any::<bool>()).prop_map(|(package, hidden)| {
            let vis = if hidden { Visibility::Hidden } else { Visibility::Visible };
            CatalogEntry::new(package.clone(), package).with_visibility(vis)
        })
    }

    proptest! {
        #[test]
        fn non_owner_mask_is_order_preserving_filter(
            entries in proptest::collection::vec(arb_entry(), 0..20),
        ) {
            let masked = mask_catalog(&entries, false);
            prop_assert!(masked.iter().all(|e| e.visibility == Visibility::Visible));
            let expected: Vec<_> = entries.iter().filter(|e| e.visibility == Visibility::Visible).cloned().collect();
            prop_assert_eq!(masked, expected);
        }

        #[test]
        fn mask_is_idempotent(
            entries in proptest::collection::vec(arb_entry(), 0..20),
            owner in any::<bool>(),
        ) {
            let once = mask_catalog(&entries, owner);
            prop_assert_eq!(mask_catalog(&once, owner), once);
        }
    }
}
