//! Notification delivery queues and anonymized usage telemetry.

mod telemetry;

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::domain::MemberId;
use crate::error::Result;
use crate::journal::{Journal, Record};

pub use telemetry::{Telemetry, UsageAction, UsageLogEvent};

/// Upper bound on events returned by a single poll.
pub const MAX_POLL_BATCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    NewPost,
    NewReply,
    NewLike,
    NewMessage,
    MemberJoined,
    ProTip,
}

/// Payloads carry entity ids only; clients fetch content through the
/// regular, authorized reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub event_id: u64,
    pub recipient: MemberId,
    pub kind: NotificationKind,
    pub payload: serde_json::Value,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub acked: bool,
}

struct Queue {
    last_id: u64,
    acked_up_to: u64,
    pending: VecDeque<NotificationEvent>,
    signal: watch::Sender<u64>,
}

impl Queue {
    fn new() -> Self {
        Self {
            last_id: 0,
            acked_up_to: 0,
            pending: VecDeque::new(),
            signal: watch::Sender::new(0),
        }
    }

    fn push(&mut self, event: NotificationEvent) {
        self.last_id = self.last_id.max(event.event_id);
        if event.event_id > self.acked_up_to {
            self.pending.push_back(event);
        }
        self.signal.send_replace(self.last_id);
    }

    fn ack(&mut self, up_to: u64) -> usize {
        let before = self.pending.len();
        self.pending.retain(|e| e.event_id > up_to);
        self.acked_up_to = self.acked_up_to.max(up_to);
        before - self.pending.len()
    }
}

/// Per-recipient at-least-once queues. Events stay until acknowledged.
pub struct Notifications {
    queues: Mutex<HashMap<MemberId, Queue>>,
    journal: Arc<dyn Journal>,
}

impl Notifications {
    pub fn new(journal: Arc<dyn Journal>) -> Self {
        Self {
            queues: Mutex::new(HashMap::new()),
            journal,
        }
    }

    pub fn enqueue(
        &self,
        recipient: &MemberId,
        kind: NotificationKind,
        payload: serde_json::Value,
        now: DateTime<Utc>,
    ) -> Result<NotificationEvent> {
        let mut queues = self.queues.lock();
        let queue = queues.entry(recipient.clone()).or_insert_with(Queue::new);
        let event = NotificationEvent {
            event_id: queue.last_id + 1,
            recipient: recipient.clone(),
            kind,
            payload,
            created_at: now,
            acked: false,
        };
        self.journal.append(&Record::NotificationEnqueued {
            event: event.clone(),
        })?;
        queue.push(event.clone());
        Ok(event)
    }

    /// Unacknowledged events with ids above `after`, oldest first.
    pub fn pending(&self, recipient: &MemberId, after: u64) -> Vec<NotificationEvent> {
        self.queues
            .lock()
            .get(recipient)
            .map(|q| {
                q.pending
                    .iter()
                    .filter(|e| e.event_id > after)
                    .take(MAX_POLL_BATCH)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Like [`pending`](Self::pending), but waits up to `wait` for an event
    /// to arrive when none is pending.
    pub async fn poll(
        &self,
        recipient: &MemberId,
        after: u64,
        wait: Duration,
    ) -> Vec<NotificationEvent> {
        // Subscribe before the first check so no enqueue slips between them.
        let mut signal = self
            .queues
            .lock()
            .entry(recipient.clone())
            .or_insert_with(Queue::new)
            .signal
            .subscribe();
        let deadline = tokio::time::Instant::now() + wait;
        loop {
            let events = self.pending(recipient, after);
            if !events.is_empty() || wait.is_zero() {
                return events;
            }
            match tokio::time::timeout_at(deadline, signal.changed()).await {
                Ok(Ok(())) => continue,
                _ => return Vec::new(),
            }
        }
    }

    /// Acknowledges every event up to and including `up_to`. Returns how many
    /// pending events were newly acknowledged; repeating an ack returns 0.
    pub fn ack(&self, recipient: &MemberId, up_to: u64) -> Result<usize> {
        let mut queues = self.queues.lock();
        let Some(queue) = queues.get_mut(recipient) else {
            return Ok(0);
        };
        // Never acknowledge ids that have not been issued yet.
        let up_to = up_to.min(queue.last_id);
        if up_to <= queue.acked_up_to {
            return Ok(0);
        }
        self.journal.append(&Record::NotificationsAcked {
            recipient: recipient.clone(),
            up_to,
        })?;
        Ok(queue.ack(up_to))
    }

    pub(crate) fn restore(&self, record: &Record) {
        let mut queues = self.queues.lock();
        match record {
            Record::NotificationEnqueued { event } => queues
                .entry(event.recipient.clone())
                .or_insert_with(Queue::new)
                .push(event.clone()),
            Record::NotificationsAcked { recipient, up_to } => {
                queues
                    .entry(recipient.clone())
                    .or_insert_with(Queue::new)
                    .ack(*up_to);
            }
            _ => {}
        }
    }
}
