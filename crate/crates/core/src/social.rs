//! Community feed, direct messages, and the pro-tip rotation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{CommunityId, MemberId};
use crate::error::{Error, Result};
use crate::journal::{Journal, Record};

pub const MAX_BODY_CHARS: usize = 4_000;
pub const DEFAULT_PRO_TIP_PERIOD_DAYS: i64 = 7;
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 200;

const BUILTIN_TIPS: &str = include_str!("../data/pro_tips.json");

macro_rules! numeric_id {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }
    };
}

numeric_id!(PostId);
numeric_id!(ReplyId);
numeric_id!(MessageId);

/// Who wrote a post. Serialized as the member id, or `"system"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Author {
    System,
    Member(MemberId),
}

impl Author {
    pub fn member(&self) -> Option<&MemberId> {
        match self {
            Author::System => None,
            Author::Member(m) => Some(m),
        }
    }
}

impl Serialize for Author {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Author::System => s.serialize_str("system"),
            Author::Member(m) => s.serialize_str(m.as_str()),
        }
    }
}

impl<'de> Deserialize<'de> for Author {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "system" {
            Author::System
        } else {
            Author::Member(MemberId(s))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedPost {
    pub post_id: PostId,
    pub community_id: CommunityId,
    pub author: Author,
    pub body: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub like_count: usize,
    #[serde(default)]
    pub is_pro_tip: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub reply_id: ReplyId,
    pub post_id: PostId,
    pub author: MemberId,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

/// A post as listed in the feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedItem {
    #[serde(flatten)]
    pub post: FeedPost,
    pub liked_by_me: bool,
    pub replies: Vec<Reply>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectMessage {
    pub message_id: MessageId,
    pub sender: MemberId,
    pub recipient: MemberId,
    pub body: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub read_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikeOutcome {
    pub liked: bool,
    pub like_count: usize,
}

/// Tip texts and how often one is posted.
#[derive(Debug, Clone)]
pub struct ProTipSource {
    pub tips: Vec<String>,
    pub period: Duration,
}

impl ProTipSource {
    pub fn new(tips: Vec<String>, period: Duration) -> Result<Self> {
        if tips.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::InvalidData("pro-tip list contains an empty tip".into()));
        }
        if period <= Duration::zero() {
            return Err(Error::InvalidData("pro-tip period must be positive".into()));
        }
        Ok(Self { tips, period })
    }

    /// The tip list shipped with the crate, posted weekly.
    pub fn builtin() -> Self {
        let tips = serde_json::from_str(BUILTIN_TIPS).expect("shipped pro-tip list is valid");
        Self::new(tips, Duration::days(DEFAULT_PRO_TIP_PERIOD_DAYS)).expect("valid builtin tips")
    }

    pub fn load(path: &Path, period: Duration) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let tips = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidData(format!("pro-tip list: {e}")))?;
        Self::new(tips, period)
    }
}

#[derive(Debug, Clone, Copy)]
struct TipCursor {
    next_index: usize,
    last_posted: DateTime<Utc>,
}

#[derive(Default)]
struct State {
    posts: BTreeMap<PostId, FeedPost>,
    likes: HashMap<PostId, BTreeSet<MemberId>>,
    replies: HashMap<PostId, Vec<Reply>>,
    messages: BTreeMap<MessageId, DirectMessage>,
    conversations: HashMap<(MemberId, MemberId), Vec<MessageId>>,
    tips: HashMap<CommunityId, TipCursor>,
    last_post: u64,
    last_reply: u64,
    last_message: u64,
}

fn pair(a: &MemberId, b: &MemberId) -> (MemberId, MemberId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl State {
    fn put_post(&mut self, post: FeedPost) {
        self.last_post = self.last_post.max(post.post_id.0);
        self.posts.insert(post.post_id, post);
    }

    fn set_like(&mut self, post: PostId, member: &MemberId, liked: bool) {
        let likers = self.likes.entry(post).or_default();
        if liked {
            likers.insert(member.clone());
        } else {
            likers.remove(member);
        }
    }

    fn put_reply(&mut self, reply: Reply) {
        self.last_reply = self.last_reply.max(reply.reply_id.0);
        self.replies.entry(reply.post_id).or_default().push(reply);
    }

    fn put_message(&mut self, message: DirectMessage) {
        self.last_message = self.last_message.max(message.message_id.0);
        let ids = self
            .conversations
            .entry(pair(&message.sender, &message.recipient))
            .or_default();
        ids.push(message.message_id);
        self.messages.insert(message.message_id, message);
    }

    fn like_count(&self, post: PostId) -> usize {
        self.likes.get(&post).map_or(0, BTreeSet::len)
    }
}

fn check_body(body: &str) -> Result<String> {
    let body = body.trim();
    if body.is_empty() {
        return Err(Error::EmptyBody);
    }
    if body.chars().count() > MAX_BODY_CHARS {
        return Err(Error::BodyTooLong {
            max: MAX_BODY_CHARS,
        });
    }
    Ok(body.to_owned())
}

/// Feed and message storage. Membership checks are the caller's job; this
/// type only enforces its own invariants.
pub struct Social {
    state: RwLock<State>,
    journal: Arc<dyn Journal>,
    tips: ProTipSource,
}

impl Social {
    pub fn new(journal: Arc<dyn Journal>, tips: ProTipSource) -> Self {
        Self {
            state: RwLock::new(State::default()),
            journal,
            tips,
        }
    }

    pub fn create_post(
        &self,
        community: &CommunityId,
        author: &MemberId,
        body: &str,
        now: DateTime<Utc>,
    ) -> Result<FeedPost> {
        let body = check_body(body)?;
        let mut state = self.state.write();
        let post = FeedPost {
            post_id: PostId(state.last_post + 1),
            community_id: community.clone(),
            author: Author::Member(author.clone()),
            body,
            created_at: now,
            like_count: 0,
            is_pro_tip: false,
        };
        self.journal.append(&Record::PostCreated { post: post.clone() })?;
        state.put_post(post.clone());
        Ok(post)
    }

    pub fn post(&self, post: PostId) -> Result<FeedPost> {
        let state = self.state.read();
        let mut p = state.posts.get(&post).cloned().ok_or(Error::UnknownPost)?;
        p.like_count = state.like_count(post);
        Ok(p)
    }

    pub fn toggle_like(&self, post: PostId, member: &MemberId) -> Result<LikeOutcome> {
        let mut state = self.state.write();
        if !state.posts.contains_key(&post) {
            return Err(Error::UnknownPost);
        }
        let liked = !state.likes.get(&post).is_some_and(|l| l.contains(member));
        self.journal.append(&Record::LikeSet {
            post_id: post,
            member_id: member.clone(),
            liked,
        })?;
        state.set_like(post, member, liked);
        Ok(LikeOutcome {
            liked,
            like_count: state.like_count(post),
        })
    }

    pub fn reply(
        &self,
        post: PostId,
        author: &MemberId,
        body: &str,
        now: DateTime<Utc>,
    ) -> Result<Reply> {
        let body = check_body(body)?;
        let mut state = self.state.write();
        if !state.posts.contains_key(&post) {
            return Err(Error::UnknownPost);
        }
        let reply = Reply {
            reply_id: ReplyId(state.last_reply + 1),
            post_id: post,
            author: author.clone(),
            body,
            created_at: now,
        };
        self.journal.append(&Record::ReplyCreated {
            reply: reply.clone(),
        })?;
        state.put_reply(reply.clone());
        Ok(reply)
    }

    /// Posts of one community, newest first, with their replies oldest first.
    pub fn feed(&self, community: &CommunityId, viewer: &MemberId) -> Vec<FeedItem> {
        let state = self.state.read();
        let mut items: Vec<FeedItem> = state
            .posts
            .values()
            .filter(|p| &p.community_id == community)
            .map(|p| FeedItem {
                post: FeedPost {
                    like_count: state.like_count(p.post_id),
                    ..p.clone()
                },
                liked_by_me: state
                    .likes
                    .get(&p.post_id)
                    .is_some_and(|l| l.contains(viewer)),
                replies: state.replies.get(&p.post_id).cloned().unwrap_or_default(),
            })
            .collect();
        items.sort_by(|a, b| {
            b.post
                .created_at
                .cmp(&a.post.created_at)
                .then(b.post.post_id.cmp(&a.post.post_id))
        });
        items
    }

    pub fn send_message(
        &self,
        sender: &MemberId,
        recipient: &MemberId,
        body: &str,
        now: DateTime<Utc>,
    ) -> Result<DirectMessage> {
        if sender == recipient {
            return Err(Error::SelfMessage);
        }
        let body = check_body(body)?;
        let mut state = self.state.write();
        let message = DirectMessage {
            message_id: MessageId(state.last_message + 1),
            sender: sender.clone(),
            recipient: recipient.clone(),
            body,
            created_at: now,
            read_at: None,
        };
        self.journal.append(&Record::MessageSent {
            message: message.clone(),
        })?;
        state.put_message(message.clone());
        Ok(message)
    }

    /// Messages between `me` and `other` ordered by send time, then id.
    ///
    /// `after` is a cursor: only messages ordered after that one are
    /// returned. Messages addressed to `me` are marked read.
    pub fn conversation(
        &self,
        me: &MemberId,
        other: &MemberId,
        after: Option<MessageId>,
        limit: usize,
        now: DateTime<Utc>,
    ) -> Result<Vec<DirectMessage>> {
        let limit = limit.clamp(1, MAX_PAGE);
        let mut state = self.state.write();
        let key = |m: &DirectMessage| (m.created_at, m.message_id);
        let mut thread: Vec<&DirectMessage> = state
            .conversations
            .get(&pair(me, other))
            .map(|ids| ids.iter().map(|id| &state.messages[id]).collect())
            .unwrap_or_default();
        thread.sort_by_key(|m| key(m));
        let cursor = after.and_then(|id| state.messages.get(&id)).map(key);
        let page: Vec<MessageId> = thread
            .into_iter()
            .filter(|m| cursor.is_none_or(|c| key(m) > c))
            .take(limit)
            .map(|m| m.message_id)
            .collect();

        let mut out = Vec::with_capacity(page.len());
        for id in page {
            let unread = {
                let m = &state.messages[&id];
                &m.recipient == me && m.read_at.is_none()
            };
            if unread {
                self.journal.append(&Record::MessageRead {
                    message_id: id,
                    read_at: now,
                })?;
                state.messages.get_mut(&id).expect("listed").read_at = Some(now);
            }
            out.push(state.messages[&id].clone());
        }
        Ok(out)
    }

    /// Posts the next pro-tip in every listed community that has gone a full
    /// period without one (or never had one).
    pub fn tick_pro_tips(
        &self,
        communities: &[CommunityId],
        now: DateTime<Utc>,
    ) -> Result<Vec<FeedPost>> {
        if self.tips.tips.is_empty() {
            return Ok(Vec::new());
        }
        let mut state = self.state.write();
        let mut created = Vec::new();
        for community in communities {
            let cursor = state.tips.get(community).copied();
            if cursor.is_some_and(|c| now - c.last_posted < self.tips.period) {
                continue;
            }
            let index = cursor.map_or(0, |c| c.next_index) % self.tips.tips.len();
            let post = FeedPost {
                post_id: PostId(state.last_post + 1),
                community_id: community.clone(),
                author: Author::System,
                body: self.tips.tips[index].clone(),
                created_at: now,
                like_count: 0,
                is_pro_tip: true,
            };
            let next_index = (index + 1) % self.tips.tips.len();
            self.journal.append(&Record::PostCreated { post: post.clone() })?;
            self.journal.append(&Record::ProTipPosted {
                community_id: community.clone(),
                next_index,
                posted_at: now,
            })?;
            state.put_post(post.clone());
            state.tips.insert(
                community.clone(),
                TipCursor {
                    next_index,
                    last_posted: now,
                },
            );
            created.push(post);
        }
        Ok(created)
    }

    pub fn pro_tips(&self) -> &ProTipSource {
        &self.tips
    }

    pub(crate) fn restore(&self, record: &Record) {
        let mut state = self.state.write();
        match record {
            Record::PostCreated { post } => state.put_post(post.clone()),
            Record::LikeSet {
                post_id,
                member_id,
                liked,
            } => state.set_like(*post_id, member_id, *liked),
            Record::ReplyCreated { reply } => state.put_reply(reply.clone()),
            Record::MessageSent { message } => state.put_message(message.clone()),
            Record::MessageRead {
                message_id,
                read_at,
            } => {
                if let Some(m) = state.messages.get_mut(message_id) {
                    m.read_at = Some(*read_at);
                }
            }
            Record::ProTipPosted {
                community_id,
                next_index,
                posted_at,
            } => {
                state.tips.insert(
                    community_id.clone(),
                    TipCursor {
                        next_index: *next_index,
                        last_posted: *posted_at,
                    },
                );
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::journal::NullJournal;
    use chrono::TimeZone;

    fn social() -> Social {
        Social::new(Arc::new(NullJournal), ProTipSource::builtin())
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 9, 0, 0).unwrap()
    }

    fn c(s: &str) -> CommunityId {
        CommunityId::from(s)
    }

    fn m(s: &str) -> MemberId {
        MemberId::from(s)
    }

    #[test]
    fn post_body_rules() {
        let s = social();
        assert_eq!(s.create_post(&c("c"), &m("a"), "  ", t0()), Err(Error::EmptyBody));
        let long = "x".repeat(MAX_BODY_CHARS + 1);
        assert_eq!(
            s.create_post(&c("c"), &m("a"), &long, t0()),
            Err(Error::BodyTooLong { max: MAX_BODY_CHARS })
        );
        let exact = "é".repeat(MAX_BODY_CHARS);
        assert!(s.create_post(&c("c"), &m("a"), &exact, t0()).is_ok());
    }

    #[test]
    fn like_toggle_is_involution() {
        let s = social();
        let p = s.create_post(&c("c"), &m("a"), "hello", t0()).unwrap();
        assert_eq!(s.toggle_like(p.post_id, &m("b")).unwrap().like_count, 1);
        assert_eq!(s.toggle_like(p.post_id, &m("b")).unwrap().like_count, 0);
        s.toggle_like(p.post_id, &m("b")).unwrap();
        let out = s.toggle_like(p.post_id, &m("c")).unwrap();
        assert_eq!(out, LikeOutcome { liked: true, like_count: 2 });
        assert_eq!(s.toggle_like(PostId(99), &m("b")), Err(Error::UnknownPost));
    }

    #[test]
    fn feed_is_per_community_newest_first() {
        let s = social();
        s.create_post(&c("one"), &m("a"), "first", t0()).unwrap();
        let p2 = s
            .create_post(&c("one"), &m("a"), "second", t0() + Duration::minutes(1))
            .unwrap();
        s.create_post(&c("two"), &m("z"), "elsewhere", t0()).unwrap();
        s.reply(p2.post_id, &m("b"), "nice", t0()).unwrap();
        let feed = s.feed(&c("one"), &m("b"));
        assert_eq!(feed.len(), 2);
        assert_eq!(feed[0].post.body, "second");
        assert_eq!(feed[0].replies.len(), 1);
        assert!(feed.iter().all(|f| f.post.community_id == c("one")));
    }

    #[test]
    fn messages_order_and_read_marks() {
        let s = social();
        assert_eq!(s.send_message(&m("a"), &m("a"), "hi", t0()), Err(Error::SelfMessage));
        let m1 = s.send_message(&m("a"), &m("b"), "one", t0()).unwrap();
        let m2 = s.send_message(&m("b"), &m("a"), "two", t0()).unwrap();
        let m3 = s
            .send_message(&m("a"), &m("b"), "three", t0() - Duration::seconds(5))
            .unwrap();
        s.send_message(&m("a"), &m("c"), "other thread", t0()).unwrap();

        let later = t0() + Duration::hours(1);
        let thread = s.conversation(&m("b"), &m("a"), None, 50, later).unwrap();
        let ids: Vec<_> = thread.iter().map(|m| m.message_id).collect();
        assert_eq!(ids, [m3.message_id, m1.message_id, m2.message_id]);
        assert_eq!(thread[0].read_at, Some(later));
        assert_eq!(thread[2].read_at, None, "b sent this one");

        let page = s
            .conversation(&m("a"), &m("b"), Some(m1.message_id), 50, later)
            .unwrap();
        assert_eq!(page.len(), 1);
        assert_eq!(page[0].message_id, m2.message_id);
    }

    #[test]
    fn first_tick_posts_and_same_week_does_not() {
        let s = social();
        let first = s.tick_pro_tips(&[c("one")], t0()).unwrap();
        assert_eq!(first.len(), 1);
        assert!(first[0].is_pro_tip);
        assert_eq!(first[0].author, Author::System);
        assert!(s
            .tick_pro_tips(&[c("one")], t0() + Duration::days(6))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn author_serialization() {
        assert_eq!(serde_json::to_value(Author::System).unwrap(), "system");
        let a: Author = serde_json::from_value(serde_json::json!("abc")).unwrap();
        assert_eq!(a, Author::Member(m("abc")));
    }
}
