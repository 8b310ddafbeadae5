//! The service facade: authorization, cross-module orchestration, and
//! notification fanout. Transports call into this and nothing else.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::catalog::{CatalogDiff, CatalogStore, StoredCatalog, SyncOutcome};
use crate::clock::Clock;
use crate::directory::{Community, Directory, Member, Principal, Session, DEFAULT_TOKEN_TTL_DAYS};
use crate::domain::{
    AppView, CatalogEntry, CommunityId, Decision, IdentityTriple, MemberId, MemberRef,
    PermissionDictionary, Visibility,
};
use crate::error::{Error, Result};
use crate::events::{NotificationEvent, NotificationKind, Notifications, Telemetry, UsageLogEvent};
use crate::journal::{FileJournal, Journal, NullJournal, Record};
use crate::oversight::{
    self, CommunityAppRow, CommunitySnapshot, PermissionTallyRow, TallyFilter, TallyScope,
};
use crate::social::{DirectMessage, FeedItem, FeedPost, LikeOutcome, MessageId, PostId, ProTipSource, Reply, Social};

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const TELEMETRY_FILE: &str = "telemetry.ndjson";

pub struct ServiceConfig {
    /// Where the journal and telemetry log live. `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub dictionary: PermissionDictionary,
    pub pro_tips: ProTipSource,
    pub telemetry_salt: Vec<u8>,
    pub token_ttl: Duration,
    /// fsync every journal append.
    pub sync_writes: bool,
}

impl ServiceConfig {
    pub fn in_memory(telemetry_salt: impl Into<Vec<u8>>) -> Self {
        Self {
            data_dir: None,
            dictionary: PermissionDictionary::builtin(),
            pro_tips: ProTipSource::builtin(),
            telemetry_salt: telemetry_salt.into(),
            token_ttl: Duration::days(DEFAULT_TOKEN_TTL_DAYS),
            sync_writes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub token: String,
    pub member_id: MemberId,
    pub display_name: String,
    pub device_key: String,
    pub expires_at: DateTime<Utc>,
}

impl Registration {
    fn new(session: Session, member: Member) -> Self {
        Self {
            token: session.token,
            member_id: member.member_id,
            display_name: member.display_name,
            device_key: session.device_key.to_hex(),
            expires_at: session.expires_at,
        }
    }
}

pub struct Coops {
    journal: Arc<dyn Journal>,
    clock: Arc<dyn Clock>,
    dictionary: PermissionDictionary,
    directory: Directory,
    catalogs: CatalogStore,
    social: Social,
    notifications: Notifications,
    telemetry: Telemetry,
}

impl Coops {
    /// Builds the service, replaying the journal if `data_dir` holds one.
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        let (journal, telemetry, records): (Arc<dyn Journal>, _, _) = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let (journal, records) =
                    FileJournal::open(dir.join(JOURNAL_FILE), config.sync_writes)?;
                let telemetry =
                    Telemetry::to_file(config.telemetry_salt, dir.join(TELEMETRY_FILE))?;
                (Arc::new(journal), telemetry, records)
            }
            None => (
                Arc::new(NullJournal),
                Telemetry::in_memory(config.telemetry_salt),
                Vec::new(),
            ),
        };
        let service = Self::with_journal(
            journal,
            clock,
            config.dictionary,
            config.pro_tips,
            telemetry,
            config.token_ttl,
        );
        tracing::info!(records = records.len(), "replaying journal");
        for record in &records {
            service.restore(record);
        }
        Ok(service)
    }

    pub fn with_journal(
        journal: Arc<dyn Journal>,
        clock: Arc<dyn Clock>,
        dictionary: PermissionDictionary,
        pro_tips: ProTipSource,
        telemetry: Telemetry,
        token_ttl: Duration,
    ) -> Self {
        Self {
            directory: Directory::new(Arc::clone(&journal), token_ttl),
            catalogs: CatalogStore::new(),
            social: Social::new(Arc::clone(&journal), pro_tips),
            notifications: Notifications::new(Arc::clone(&journal)),
            telemetry,
            dictionary,
            clock,
            journal,
        }
    }

    fn restore(&self, record: &Record) {
        match record {
            Record::MemberRegistered { .. }
            | Record::SessionIssued { .. }
            | Record::CommunityCreated { .. }
            | Record::MembershipAdded { .. } => self.directory.restore(record),
            Record::CatalogStored { catalog } => self.catalogs.restore(catalog.clone()),
            Record::PostCreated { .. }
            | Record::LikeSet { .. }
            | Record::ReplyCreated { .. }
            | Record::MessageSent { .. }
            | Record::MessageRead { .. }
            | Record::ProTipPosted { .. } => self.social.restore(record),
            Record::NotificationEnqueued { .. } | Record::NotificationsAcked { .. } => {
                self.notifications.restore(record)
            }
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn dictionary(&self) -> &PermissionDictionary {
        &self.dictionary
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    fn notify(&self, recipients: &[MemberId], kind: NotificationKind, payload: serde_json::Value) -> Result<()> {
        let now = self.now();
        for r in recipients {
            self.notifications.enqueue(r, kind, payload.clone(), now)?;
        }
        Ok(())
    }

    fn others_in(&self, community: &CommunityId, me: &MemberId) -> Vec<MemberId> {
        self.directory
            .member_ids(community)
            .into_iter()
            .filter(|m| m != me)
            .collect()
    }

    // -- directory --

    pub fn register(&self, triple: &IdentityTriple, display_name: &str) -> Result<Registration> {
        let (session, member) = self.directory.register(triple, display_name, self.now())?;
        Ok(Registration::new(session, member))
    }

    pub fn authenticate(&self, token: &str) -> Result<Principal> {
        self.directory.authenticate(token, self.now())
    }

    pub fn create_community(&self, caller: &Principal, name: &str) -> Result<Community> {
        self.directory.create_community(caller, name, self.now())
    }

    pub fn join_community(&self, caller: &Principal, invite_code: &str) -> Result<MemberRef> {
        let (me, existing) = self.directory.join(caller, invite_code, self.now())?;
        self.notify(
            &existing,
            NotificationKind::MemberJoined,
            json!({ "community_id": me.community_id, "member_id": me.member_id }),
        )?;
        Ok(me)
    }

    pub fn list_members(&self, caller: &Principal, community: &CommunityId) -> Result<Vec<MemberRef>> {
        self.directory.members(&caller.member_id, community)
    }

    // -- catalog --

    pub fn upload_snapshot(&self, caller: &Principal, snapshot: &[CatalogEntry]) -> Result<SyncOutcome> {
        self.catalogs.replace_snapshot(
            &caller.member_id,
            caller.device_key,
            snapshot,
            self.journal.as_ref(),
        )
    }

    pub fn apply_diff(
        &self,
        caller: &Principal,
        diff: &CatalogDiff,
        base_version: Option<u64>,
    ) -> Result<SyncOutcome> {
        self.catalogs.apply(
            &caller.member_id,
            caller.device_key,
            diff,
            base_version,
            self.journal.as_ref(),
        )
    }

    pub fn set_visibility(&self, caller: &Principal, package: &str, visibility: Visibility) -> Result<u64> {
        self.catalogs.set_visibility(
            &caller.member_id,
            caller.device_key,
            package,
            visibility,
            self.journal.as_ref(),
        )
    }

    pub fn set_permission(
        &self,
        caller: &Principal,
        package: &str,
        permission: &str,
        decision: Decision,
    ) -> Result<u64> {
        self.catalogs.set_permission(
            &caller.member_id,
            caller.device_key,
            package,
            permission,
            decision,
            self.journal.as_ref(),
        )
    }

    /// The caller's own stored catalog.
    pub fn own_catalog(&self, caller: &Principal) -> Arc<StoredCatalog> {
        self.catalogs.get(&caller.member_id).unwrap_or_else(|| {
            Arc::new(StoredCatalog::empty(caller.member_id.clone(), caller.device_key))
        })
    }

    // -- oversight --

    fn community_snapshot(&self, caller: &Principal, community: &CommunityId) -> Result<CommunitySnapshot> {
        self.directory.require_member(&caller.member_id, community)?;
        let members = self.directory.member_ids(community);
        let catalogs = self.catalogs.snapshot(&members);
        Ok(CommunitySnapshot { members, catalogs })
    }

    pub fn community_apps(&self, caller: &Principal, community: &CommunityId) -> Result<Vec<CommunityAppRow>> {
        let snapshot = self.community_snapshot(caller, community)?;
        Ok(oversight::community_apps(&snapshot, &caller.member_id))
    }

    pub fn member_apps(
        &self,
        caller: &Principal,
        community: &CommunityId,
        target: &MemberId,
    ) -> Result<Vec<AppView>> {
        let snapshot = self.community_snapshot(caller, community)?;
        oversight::member_apps(&snapshot, &caller.member_id, target)
    }

    pub fn permission_tally(
        &self,
        caller: &Principal,
        community: &CommunityId,
        package: &str,
        scope: &TallyScope,
        filter: TallyFilter,
    ) -> Result<Vec<PermissionTallyRow>> {
        let snapshot = self.community_snapshot(caller, community)?;
        oversight::permission_tally(
            &snapshot,
            &caller.member_id,
            package,
            scope,
            filter,
            &self.dictionary,
        )
    }

    // -- social --

    fn post_in_my_community(&self, caller: &Principal, post: PostId) -> Result<FeedPost> {
        let post = self.social.post(post)?;
        self.directory
            .require_member(&caller.member_id, &post.community_id)?;
        Ok(post)
    }

    pub fn create_post(&self, caller: &Principal, community: &CommunityId, body: &str) -> Result<FeedPost> {
        self.directory.require_member(&caller.member_id, community)?;
        let post = self
            .social
            .create_post(community, &caller.member_id, body, self.now())?;
        self.notify(
            &self.others_in(community, &caller.member_id),
            NotificationKind::NewPost,
            json!({ "community_id": community, "post_id": post.post_id }),
        )?;
        Ok(post)
    }

    pub fn feed(&self, caller: &Principal, community: &CommunityId) -> Result<Vec<FeedItem>> {
        self.directory.require_member(&caller.member_id, community)?;
        Ok(self.social.feed(community, &caller.member_id))
    }

    pub fn toggle_like(&self, caller: &Principal, post: PostId) -> Result<LikeOutcome> {
        let target = self.post_in_my_community(caller, post)?;
        let outcome = self.social.toggle_like(post, &caller.member_id)?;
        if let Some(author) = target.author.member() {
            if outcome.liked && author != &caller.member_id {
                self.notify(
                    std::slice::from_ref(author),
                    NotificationKind::NewLike,
                    json!({ "community_id": target.community_id, "post_id": post }),
                )?;
            }
        }
        Ok(outcome)
    }

    pub fn reply(&self, caller: &Principal, post: PostId, body: &str) -> Result<Reply> {
        let target = self.post_in_my_community(caller, post)?;
        let reply = self
            .social
            .reply(post, &caller.member_id, body, self.now())?;
        if let Some(author) = target.author.member() {
            if author != &caller.member_id {
                self.notify(
                    std::slice::from_ref(author),
                    NotificationKind::NewReply,
                    json!({
                        "community_id": target.community_id,
                        "post_id": post,
                        "reply_id": reply.reply_id,
                    }),
                )?;
            }
        }
        Ok(reply)
    }

    pub fn send_message(&self, caller: &Principal, recipient: &MemberId, body: &str) -> Result<DirectMessage> {
        if recipient == &caller.member_id {
            return Err(Error::SelfMessage);
        }
        if !self.directory.shares_community(&caller.member_id, recipient) {
            return Err(Error::NoSharedCommunity);
        }
        let message = self
            .social
            .send_message(&caller.member_id, recipient, body, self.now())?;
        self.notify(
            std::slice::from_ref(recipient),
            NotificationKind::NewMessage,
            json!({ "message_id": message.message_id, "sender": caller.member_id }),
        )?;
        Ok(message)
    }

    pub fn conversation(
        &self,
        caller: &Principal,
        other: &MemberId,
        after: Option<MessageId>,
        limit: usize,
    ) -> Result<Vec<DirectMessage>> {
        if other == &caller.member_id {
            return Err(Error::SelfMessage);
        }
        if !self.directory.shares_community(&caller.member_id, other) {
            return Err(Error::NoSharedCommunity);
        }
        self.social
            .conversation(&caller.member_id, other, after, limit, self.now())
    }

    /// Posts any pro-tips that are due at the current clock time.
    pub fn tick_pro_tips(&self) -> Result<Vec<FeedPost>> {
        self.tick_pro_tips_at(self.now())
    }

    pub fn tick_pro_tips_at(&self, now: DateTime<Utc>) -> Result<Vec<FeedPost>> {
        let communities = self.directory.community_ids();
        let posts = self.social.tick_pro_tips(&communities, now)?;
        for post in &posts {
            for member in self.directory.member_ids(&post.community_id) {
                self.notifications.enqueue(
                    &member,
                    NotificationKind::ProTip,
                    json!({ "community_id": post.community_id, "post_id": post.post_id }),
                    now,
                )?;
            }
        }
        Ok(posts)
    }

    // -- events --

    pub async fn poll(&self, caller: &Principal, after: u64, wait: StdDuration) -> Vec<NotificationEvent> {
        self.notifications.poll(&caller.member_id, after, wait).await
    }

    pub fn ack(&self, caller: &Principal, up_to: u64) -> Result<usize> {
        self.notifications.ack(&caller.member_id, up_to)
    }

    pub fn record_usage(&self, caller: &Principal, action: &str) -> Result<UsageLogEvent> {
        self.telemetry
            .record(&caller.member_id, &caller.session, action, self.now())
    }
}
