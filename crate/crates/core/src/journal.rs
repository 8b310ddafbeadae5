//! Write-ahead journal behind which all service state is persisted.
//!
//! Every mutation is appended as one JSON line and made durable before the
//! in-memory state that reflects it becomes visible. On startup the journal
//! is replayed in order to rebuild that state. A torn final line (crash in
//! the middle of an append) is discarded; corruption anywhere else is an
//! error.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::catalog::StoredCatalog;
use crate::directory::{Community, Member, SessionRecord};
use crate::domain::{CommunityId, MemberId};
use crate::error::{Error, Result};
use crate::events::NotificationEvent;
use crate::social::{DirectMessage, FeedPost, MessageId, PostId, Reply};

/// One committed mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    MemberRegistered {
        member: Member,
    },
    SessionIssued {
        session: SessionRecord,
    },
    CommunityCreated {
        community: Community,
    },
    MembershipAdded {
        community_id: CommunityId,
        member_id: MemberId,
        joined_at: DateTime<Utc>,
    },
    CatalogStored {
        catalog: StoredCatalog,
    },
    PostCreated {
        post: FeedPost,
    },
    LikeSet {
        post_id: PostId,
        member_id: MemberId,
        liked: bool,
    },
    ReplyCreated {
        reply: Reply,
    },
    MessageSent {
        message: DirectMessage,
    },
    MessageRead {
        message_id: MessageId,
        read_at: DateTime<Utc>,
    },
    ProTipPosted {
        community_id: CommunityId,
        next_index: usize,
        posted_at: DateTime<Utc>,
    },
    NotificationEnqueued {
        event: NotificationEvent,
    },
    NotificationsAcked {
        recipient: MemberId,
        up_to: u64,
    },
}

pub trait Journal: Send + Sync {
    fn append(&self, record: &Record) -> Result<()>;
}

/// Journal that keeps nothing. State lives only in memory.
#[derive(Debug, Default)]
pub struct NullJournal;

impl Journal for NullJournal {
    fn append(&self, _record: &Record) -> Result<()> {
        Ok(())
    }
}

/// Journal that keeps records in memory; handy for inspecting what a
/// sequence of operations wrote.
#[derive(Debug, Default)]
pub struct MemoryJournal {
    records: Mutex<Vec<Record>>,
}

impl MemoryJournal {
    pub fn records(&self) -> Vec<Record> {
        self.records.lock().clone()
    }
}

impl Journal for MemoryJournal {
    fn append(&self, record: &Record) -> Result<()> {
        self.records.lock().push(record.clone());
        Ok(())
    }
}

/// Append-only newline-delimited JSON file.
#[derive(Debug)]
pub struct FileJournal {
    path: PathBuf,
    file: Mutex<File>,
    sync: bool,
}

impl FileJournal {
    /// Opens (or creates) the journal and returns the records already in it.
    ///
    /// With `sync` set, every append is followed by `fdatasync`.
    pub fn open(path: impl AsRef<Path>, sync: bool) -> Result<(Self, Vec<Record>)> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;

        let mut records = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut line_no = 0usize;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            // Only newline-terminated lines were fully committed.
            if !line.ends_with('\n') {
                break;
            }
            let record = serde_json::from_str::<Record>(line.trim_end()).map_err(|e| {
                Error::Storage(format!(
                    "{}: corrupt record at line {line_no}: {e}",
                    path.display()
                ))
            })?;
            records.push(record);
            good_len += n as u64;
        }
        drop(reader);

        let len = file.metadata()?.len();
        if len != good_len {
            tracing::warn!(
                path = %path.display(),
                discarded = len - good_len,
                "discarding torn journal tail"
            );
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }

        Ok((
            Self {
                path,
                file: Mutex::new(file),
                sync,
            },
            records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Journal for FileJournal {
    fn append(&self, record: &Record) -> Result<()> {
        let mut line = serde_json::to_vec(record)
            .map_err(|e| Error::Storage(format!("encode record: {e}")))?;
        line.push(b'\n');
        let mut file = self.file.lock();
        file.write_all(&line)?;
        if self.sync {
            file.sync_data()?;
        }
        Ok(())
    }
}
