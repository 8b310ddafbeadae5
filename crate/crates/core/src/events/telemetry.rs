use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::directory::TokenHash;
use crate::domain::MemberId;
use crate::error::{Error, Result};

/// Screen opens and feature uses a client may report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageAction {
    OpenCommunityApps,
    OpenOwnApps,
    OpenAppPermissions,
    OpenCommunityMembers,
    OpenMemberApps,
    OpenCommunityFeed,
    ToggleVisibility,
    ChangePermission,
    CreatePost,
    LikePost,
    ReplyPost,
    SendMessage,
}

impl UsageAction {
    pub const ALL: [UsageAction; 12] = [
        UsageAction::OpenCommunityApps,
        UsageAction::OpenOwnApps,
        UsageAction::OpenAppPermissions,
        UsageAction::OpenCommunityMembers,
        UsageAction::OpenMemberApps,
        UsageAction::OpenCommunityFeed,
        UsageAction::ToggleVisibility,
        UsageAction::ChangePermission,
        UsageAction::CreatePost,
        UsageAction::LikePost,
        UsageAction::ReplyPost,
        UsageAction::SendMessage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UsageAction::OpenCommunityApps => "open_community_apps",
            UsageAction::OpenOwnApps => "open_own_apps",
            UsageAction::OpenAppPermissions => "open_app_permissions",
            UsageAction::OpenCommunityMembers => "open_community_members",
            UsageAction::OpenMemberApps => "open_member_apps",
            UsageAction::OpenCommunityFeed => "open_community_feed",
            UsageAction::ToggleVisibility => "toggle_visibility",
            UsageAction::ChangePermission => "change_permission",
            UsageAction::CreatePost => "create_post",
            UsageAction::LikePost => "like_post",
            UsageAction::ReplyPost => "reply_post",
            UsageAction::SendMessage => "send_message",
        }
    }
}

impl fmt::Display for UsageAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UsageAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UsageAction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownAction(s.to_owned()))
    }
}

/// One anonymized usage record: salted hashes and an hour-granular timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLogEvent {
    pub actor_hash: String,
    pub action: UsageAction,
    pub occurred_at: DateTime<Utc>,
    pub session_hash: String,
}

enum Sink {
    Memory(Vec<UsageLogEvent>),
    File { path: PathBuf, file: File },
}

/// Append-only usage log.
pub struct Telemetry {
    salt: Vec<u8>,
    sink: Mutex<Sink>,
}

impl Telemetry {
    pub fn in_memory(salt: impl Into<Vec<u8>>) -> Self {
        Self {
            salt: salt.into(),
            sink: Mutex::new(Sink::Memory(Vec::new())),
        }
    }

    /// Appends to a newline-delimited JSON file.
    pub fn to_file(salt: impl Into<Vec<u8>>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            salt: salt.into(),
            sink: Mutex::new(Sink::File { path, file }),
        })
    }

    pub fn salted_hash(&self, purpose: &str, value: &[u8]) -> String {
        let mut h = Sha256::new();
        for part in [purpose.as_bytes(), &self.salt, value] {
            h.update((part.len() as u64).to_be_bytes());
            h.update(part);
        }
        hex::encode(h.finalize())
    }

    pub fn record(
        &self,
        member: &MemberId,
        session: &TokenHash,
        action: &str,
        now: DateTime<Utc>,
    ) -> Result<UsageLogEvent> {
        let action: UsageAction = action.parse()?;
        let event = UsageLogEvent {
            actor_hash: self.salted_hash("actor", member.as_str().as_bytes()),
            action,
            occurred_at: now
                .duration_trunc(TimeDelta::hours(1))
                .map_err(|e| Error::InvalidData(format!("timestamp: {e}")))?,
            session_hash: self.salted_hash("session", session.0.as_bytes()),
        };
        match &mut *self.sink.lock() {
            Sink::Memory(events) => events.push(event.clone()),
            Sink::File { file, .. } => {
                let mut line = serde_json::to_vec(&event)
                    .map_err(|e| Error::Storage(format!("encode usage event: {e}")))?;
                line.push(b'\n');
                file.write_all(&line)?;
            }
        }
        Ok(event)
    }

    /// The whole log as newline-delimited JSON.
    pub fn export(&self) -> Result<String> {
        match &*self.sink.lock() {
            Sink::Memory(events) => {
                let mut out = String::new();
                for e in events {
                    out.push_str(&serde_json::to_string(e).expect("usage events serialize"));
                    out.push('\n');
                }
                Ok(out)
            }
            Sink::File { path, .. } => Ok(std::fs::read_to_string(path)?),
        }
    }

    pub fn path(&self) -> Option<PathBuf> {
        match &*self.sink.lock() {
            Sink::Memory(_) => None,
            Sink::File { path, .. } => Some(path.clone()),
        }
    }
}
