//! Device-bound registration, sessions, and community membership.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{derive_device_key, CommunityId, DeviceKey, IdentityTriple, MemberId, MemberRef};
use crate::error::{Error, Result};
use crate::journal::{Journal, Record};

pub const INVITE_CODE_LEN: usize = 8;
const INVITE_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

pub const DEFAULT_TOKEN_TTL_DAYS: i64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub member_id: MemberId,
    pub display_name: String,
    pub device_key: DeviceKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar: Option<String>,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub community_id: CommunityId,
    pub name: String,
    pub invite_code: String,
    pub created_at: DateTime<Utc>,
    pub created_by: MemberId,
}

/// Hex SHA-256 of a bearer token. Raw tokens are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenHash(pub String);

impl TokenHash {
    pub fn of(token: &str) -> Self {
        TokenHash(hex::encode(Sha256::digest(token.as_bytes())))
    }
}

/// A freshly issued session. `token` is the bearer secret handed to the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub member_id: MemberId,
    pub device_key: DeviceKey,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub token_hash: TokenHash,
    pub member_id: MemberId,
    pub device_key: DeviceKey,
    pub expires_at: DateTime<Utc>,
}

/// The authenticated caller of an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub member_id: MemberId,
    pub device_key: DeviceKey,
    pub session: TokenHash,
}

#[derive(Debug, Default)]
struct State {
    members: HashMap<MemberId, Member>,
    by_device: HashMap<DeviceKey, MemberId>,
    sessions: HashMap<TokenHash, SessionRecord>,
    // One live session per member (and so per device).
    session_of: HashMap<MemberId, TokenHash>,
    communities: HashMap<CommunityId, Community>,
    by_code: HashMap<String, CommunityId>,
    members_of: HashMap<CommunityId, BTreeSet<MemberId>>,
    communities_of: HashMap<MemberId, BTreeSet<CommunityId>>,
}

impl State {
    fn put_member(&mut self, member: Member) {
        self.by_device
            .insert(member.device_key, member.member_id.clone());
        self.members.insert(member.member_id.clone(), member);
    }

    fn put_session(&mut self, session: SessionRecord) {
        if let Some(old) = self
            .session_of
            .insert(session.member_id.clone(), session.token_hash.clone())
        {
            self.sessions.remove(&old);
        }
        self.sessions.insert(session.token_hash.clone(), session);
    }

    fn put_community(&mut self, community: Community) {
        self.by_code
            .insert(community.invite_code.clone(), community.community_id.clone());
        self.members_of
            .entry(community.community_id.clone())
            .or_default();
        self.communities
            .insert(community.community_id.clone(), community);
    }

    fn put_membership(&mut self, community: &CommunityId, member: &MemberId) {
        self.members_of
            .entry(community.clone())
            .or_default()
            .insert(member.clone());
        self.communities_of
            .entry(member.clone())
            .or_default()
            .insert(community.clone());
    }

    fn is_member(&self, community: &CommunityId, member: &MemberId) -> bool {
        self.members_of
            .get(community)
            .is_some_and(|m| m.contains(member))
    }

    fn member_ref(&self, community: &CommunityId, id: &MemberId) -> Option<MemberRef> {
        self.members.get(id).map(|m| MemberRef {
            member_id: m.member_id.clone(),
            display_name: m.display_name.clone(),
            community_id: community.clone(),
            avatar: m.avatar.clone(),
        })
    }
}

pub struct Directory {
    state: RwLock<State>,
    journal: Arc<dyn Journal>,
    token_ttl: Duration,
}

impl Directory {
    pub fn new(journal: Arc<dyn Journal>, token_ttl: Duration) -> Self {
        Self {
            state: RwLock::new(State::default()),
            journal,
            token_ttl,
        }
    }

    /// Registers a device, or re-registers a known one.
    ///
    /// The member id is bound to the device key, so the same triple always
    /// maps to the same member. Every call issues a new token and revokes
    /// the previous one.
    pub fn register(
        &self,
        triple: &IdentityTriple,
        display_name: &str,
        now: DateTime<Utc>,
    ) -> Result<(Session, Member)> {
        let device_key = derive_device_key(triple)?;
        let display_name = display_name.trim();
        if display_name.is_empty() {
            return Err(Error::EmptyDisplayName);
        }

        let mut state = self.state.write();
        let member = match state.by_device.get(&device_key) {
            Some(id) => {
                let existing = &state.members[id];
                if existing.display_name == display_name {
                    None
                } else {
                    Some(Member {
                        display_name: display_name.to_owned(),
                        ..existing.clone()
                    })
                }
            }
            None => Some(Member {
                member_id: MemberId::generate(),
                display_name: display_name.to_owned(),
                device_key,
                avatar: None,
                registered_at: now,
            }),
        };
        if let Some(member) = member {
            self.journal.append(&Record::MemberRegistered {
                member: member.clone(),
            })?;
            state.put_member(member);
        }
        let member = state.members[&state.by_device[&device_key]].clone();

        let token = new_token();
        let record = SessionRecord {
            token_hash: TokenHash::of(&token),
            member_id: member.member_id.clone(),
            device_key,
            expires_at: now + self.token_ttl,
        };
        self.journal.append(&Record::SessionIssued {
            session: record.clone(),
        })?;
        state.put_session(record.clone());

        Ok((
            Session {
                token,
                member_id: record.member_id,
                device_key,
                expires_at: record.expires_at,
            },
            member,
        ))
    }

    pub fn authenticate(&self, token: &str, now: DateTime<Utc>) -> Result<Principal> {
        if token.is_empty() {
            return Err(Error::AuthRequired);
        }
        let hash = TokenHash::of(token);
        let state = self.state.read();
        match state.sessions.get(&hash) {
            Some(s) if s.expires_at > now => Ok(Principal {
                member_id: s.member_id.clone(),
                device_key: s.device_key,
                session: hash,
            }),
            _ => Err(Error::InvalidSession),
        }
    }

    pub fn create_community(
        &self,
        caller: &Principal,
        name: &str,
        now: DateTime<Utc>,
    ) -> Result<Community> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::EmptyCommunityName);
        }
        let mut state = self.state.write();
        let mut rng = rand::rng();
        let invite_code = loop {
            let code = random_invite_code(&mut rng);
            if !state.by_code.contains_key(&code) {
                break code;
            }
        };
        let community = Community {
            community_id: CommunityId::generate(),
            name: name.to_owned(),
            invite_code,
            created_at: now,
            created_by: caller.member_id.clone(),
        };
        self.journal.append(&Record::CommunityCreated {
            community: community.clone(),
        })?;
        self.journal.append(&Record::MembershipAdded {
            community_id: community.community_id.clone(),
            member_id: caller.member_id.clone(),
            joined_at: now,
        })?;
        state.put_community(community.clone());
        state.put_membership(&community.community_id, &caller.member_id);
        Ok(community)
    }

    /// Adds the caller to the community behind `invite_code`.
    ///
    /// Returns the caller's new membership together with the members that
    /// were already there (the recipients of the join notification).
    pub fn join(
        &self,
        caller: &Principal,
        invite_code: &str,
        now: DateTime<Utc>,
    ) -> Result<(MemberRef, Vec<MemberId>)> {
        let code = invite_code.trim().to_ascii_uppercase();
        let mut state = self.state.write();
        let community_id = state
            .by_code
            .get(&code)
            .cloned()
            .ok_or(Error::UnknownInviteCode)?;
        if state.is_member(&community_id, &caller.member_id) {
            return Err(Error::AlreadyMember);
        }
        let existing: Vec<MemberId> = state.members_of[&community_id].iter().cloned().collect();
        self.journal.append(&Record::MembershipAdded {
            community_id: community_id.clone(),
            member_id: caller.member_id.clone(),
            joined_at: now,
        })?;
        state.put_membership(&community_id, &caller.member_id);
        let me = state
            .member_ref(&community_id, &caller.member_id)
            .ok_or(Error::UnknownMember)?;
        Ok((me, existing))
    }

    /// Members of a community sorted by display name. Caller must belong to it.
    pub fn members(&self, caller: &MemberId, community: &CommunityId) -> Result<Vec<MemberRef>> {
        let state = self.state.read();
        if !state.is_member(community, caller) {
            return Err(Error::NotAMember);
        }
        let mut out: Vec<MemberRef> = state.members_of[community]
            .iter()
            .filter_map(|id| state.member_ref(community, id))
            .collect();
        out.sort_by(|a, b| {
            a.display_name
                .cmp(&b.display_name)
                .then_with(|| a.member_id.cmp(&b.member_id))
        });
        Ok(out)
    }

    pub fn require_member(&self, member: &MemberId, community: &CommunityId) -> Result<()> {
        if self.state.read().is_member(community, member) {
            Ok(())
        } else {
            Err(Error::NotAMember)
        }
    }

    pub fn is_member(&self, member: &MemberId, community: &CommunityId) -> bool {
        self.state.read().is_member(community, member)
    }

    /// Member ids of a community in id order; empty for unknown communities.
    pub fn member_ids(&self, community: &CommunityId) -> Vec<MemberId> {
        self.state
            .read()
            .members_of
            .get(community)
            .map(|m| m.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn shares_community(&self, a: &MemberId, b: &MemberId) -> bool {
        let state = self.state.read();
        match (state.communities_of.get(a), state.communities_of.get(b)) {
            (Some(ca), Some(cb)) => !ca.is_disjoint(cb),
            _ => false,
        }
    }

    pub fn communities_of(&self, member: &MemberId) -> Vec<CommunityId> {
        self.state
            .read()
            .communities_of
            .get(member)
            .map(|c| c.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn community(&self, id: &CommunityId) -> Option<Community> {
        self.state.read().communities.get(id).cloned()
    }

    pub fn community_ids(&self) -> Vec<CommunityId> {
        let mut ids: Vec<_> = self.state.read().communities.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn member(&self, id: &MemberId) -> Option<Member> {
        self.state.read().members.get(id).cloned()
    }

    pub(crate) fn restore(&self, record: &Record) {
        let mut state = self.state.write();
        match record {
            Record::MemberRegistered { member } => state.put_member(member.clone()),
            Record::SessionIssued { session } => state.put_session(session.clone()),
            Record::CommunityCreated { community } => state.put_community(community.clone()),
            Record::MembershipAdded {
                community_id,
                member_id,
                ..
            } => state.put_membership(community_id, member_id),
            _ => {}
        }
    }
}

fn new_token() -> String {
    let bytes: [u8; 32] = rand::rng().random();
    hex::encode(bytes)
}

fn random_invite_code(rng: &mut impl Rng) -> String {
    (0..INVITE_CODE_LEN)
        .map(|_| INVITE_ALPHABET[rng.random_range(0..INVITE_ALPHABET.len())] as char)
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::error::IdentityField;
    use crate::journal::NullJournal;

    fn directory() -> Directory {
        Directory::new(Arc::new(NullJournal), Duration::days(DEFAULT_TOKEN_TTL_DAYS))
    }

    fn triple(n: u32) -> IdentityTriple {
        IdentityTriple::new(format!("dev-{n}"), format!("sim-{n}"), format!("plat-{n}"))
    }

    fn login(dir: &Directory, n: u32, name: &str) -> Principal {
        let now = Utc::now();
        let (session, _) = dir.register(&triple(n), name, now).unwrap();
        dir.authenticate(&session.token, now).unwrap()
    }

    #[test]
    fn register_is_idempotent_on_device() {
        let dir = directory();
        let now = Utc::now();
        let (s1, m1) = dir.register(&triple(1), "Alice", now).unwrap();
        let (s2, m2) = dir.register(&triple(1), "Alice", now).unwrap();
        assert_eq!(m1.member_id, m2.member_id);
        assert_ne!(s1.token, s2.token);
        // the older token is revoked
        assert_eq!(dir.authenticate(&s1.token, now), Err(Error::InvalidSession));
        assert!(dir.authenticate(&s2.token, now).is_ok());
    }

    #[test]
    fn distinct_devices_distinct_members() {
        let dir = directory();
        let now = Utc::now();
        let (_, a) = dir.register(&triple(1), "Alice", now).unwrap();
        let (_, b) = dir.register(&triple(2), "Bob", now).unwrap();
        assert_ne!(a.member_id, b.member_id);
    }

    #[test]
    fn register_preconditions() {
        let dir = directory();
        let now = Utc::now();
        let err = dir
            .register(&IdentityTriple::new("d", "", "p"), "Alice", now)
            .unwrap_err();
        assert_eq!(err, Error::EmptyIdentityField(IdentityField::SimSerial));
        assert_eq!(
            dir.register(&triple(1), "  ", now).unwrap_err(),
            Error::EmptyDisplayName
        );
    }

    #[test]
    fn token_expires_after_thirty_days() {
        let dir = directory();
        let now = Utc::now();
        let (s, _) = dir.register(&triple(1), "Alice", now).unwrap();
        assert!(dir.authenticate(&s.token, now + Duration::days(29)).is_ok());
        assert_eq!(
            dir.authenticate(&s.token, now + Duration::days(30)),
            Err(Error::InvalidSession)
        );
        assert_eq!(dir.authenticate("", now), Err(Error::AuthRequired));
    }

    #[test]
    fn create_and_list() {
        let dir = directory();
        let alice = login(&dir, 1, "Alice");
        let c = dir.create_community(&alice, "Family", Utc::now()).unwrap();
        assert_eq!(c.invite_code.len(), 8);
        assert!(c
            .invite_code
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()));
        let members = dir.members(&alice.member_id, &c.community_id).unwrap();
        assert_eq!(members.len(), 1);
        assert_eq!(members[0].member_id, alice.member_id);
        assert_eq!(
            dir.create_community(&alice, "", Utc::now()).unwrap_err(),
            Error::EmptyCommunityName
        );
    }

    #[test]
    fn join_rules() {
        let dir = directory();
        let alice = login(&dir, 1, "Alice");
        let bob = login(&dir, 2, "Bob");
        let carol = login(&dir, 3, "Carol");
        let c = dir.create_community(&alice, "Family", Utc::now()).unwrap();

        assert_eq!(
            dir.members(&bob.member_id, &c.community_id).unwrap_err(),
            Error::NotAMember
        );
        let (me, existing) = dir.join(&bob, &c.invite_code.to_lowercase(), Utc::now()).unwrap();
        assert_eq!(me.member_id, bob.member_id);
        assert_eq!(existing, vec![alice.member_id.clone()]);
        assert_eq!(dir.members(&bob.member_id, &c.community_id).unwrap().len(), 2);

        assert_eq!(
            dir.join(&bob, &c.invite_code, Utc::now()).unwrap_err(),
            Error::AlreadyMember
        );
        assert_eq!(
            dir.join(&carol, "ZZZZZZZZ", Utc::now()).unwrap_err(),
            Error::UnknownInviteCode
        );
        assert!(dir.shares_community(&alice.member_id, &bob.member_id));
        assert!(!dir.shares_community(&alice.member_id, &carol.member_id));
    }

    #[test]
    fn members_sorted_by_display_name() {
        let dir = directory();
        let zed = login(&dir, 1, "Zed");
        let amy = login(&dir, 2, "Amy");
        let c = dir.create_community(&zed, "C", Utc::now()).unwrap();
        dir.join(&amy, &c.invite_code, Utc::now()).unwrap();
        let names: Vec<_> = dir
            .members(&zed.member_id, &c.community_id)
            .unwrap()
            .into_iter()
            .map(|m| m.display_name)
            .collect();
        assert_eq!(names, ["Amy", "Zed"]);
    }

    #[test]
    fn ten_thousand_invite_codes_are_unique() {
        let dir = directory();
        let alice = login(&dir, 1, "Alice");
        let mut codes = HashSet::new();
        for i in 0..10_000 {
            let c = dir
                .create_community(&alice, &format!("c{i}"), Utc::now())
                .unwrap();
            assert!(codes.insert(c.invite_code));
        }
    }

    #[test]
    fn concurrent_duplicate_joins_create_one_membership() {
        let dir = Arc::new(directory());
        let alice = login(&dir, 1, "Alice");
        let bob = login(&dir, 2, "Bob");
        let c = dir.create_community(&alice, "C", Utc::now()).unwrap();
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let dir = Arc::clone(&dir);
                let bob = bob.clone();
                let code = c.invite_code.clone();
                std::thread::spawn(move || dir.join(&bob, &code, Utc::now()).is_ok())
            })
            .collect();
        let ok = handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .filter(|ok| *ok)
            .count();
        assert_eq!(ok, 1);
        assert_eq!(dir.member_ids(&c.community_id).len(), 2);
    }
}
