//! Working-memory session buffers.
//!
//! Each `(project, session)` pair owns a bounded FIFO of messages that
//! expires a fixed time after its last write. Reads never extend the
//! lifetime. Buffers are volatile and are not part of graph snapshots.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{SharedClock, Timestamp};
use crate::kref::is_token;

pub const DEFAULT_CAPACITY: usize = 50;
pub const DEFAULT_TTL_MS: i64 = 60 * 60 * 1000;

#[derive(Debug, Error, PartialEq)]
#[error("malformed session id `{input}`: {reason}")]
pub struct SessionIdError {
    pub input: String,
    pub reason: &'static str,
}

/// `context:user_hash:YYYYMMDD:seq`. The context is the isolation boundary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId {
    context: String,
    user_hash: String,
    date: NaiveDate,
    seq: u32,
}

impl SessionId {
    pub fn new(
        context: &str,
        user_hash: &str,
        date: NaiveDate,
        seq: u32,
    ) -> Result<Self, SessionIdError> {
        let err = |reason| SessionIdError {
            input: format!("{context}:{user_hash}:{}:{seq}", date.format("%Y%m%d")),
            reason,
        };
        if !is_token(context) {
            return Err(err("context must be a non-empty token"));
        }
        if !is_token(user_hash) {
            return Err(err("user hash must be a non-empty token"));
        }
        if seq == 0 {
            return Err(err("sequence number must be positive"));
        }
        Ok(SessionId {
            context: context.to_string(),
            user_hash: user_hash.to_string(),
            date,
            seq,
        })
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn user_hash(&self) -> &str {
        &self.user_hash
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn seq(&self) -> u32 {
        self.seq
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.context,
            self.user_hash,
            self.date.format("%Y%m%d"),
            self.seq
        )
    }
}

impl FromStr for SessionId {
    type Err = SessionIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| SessionIdError {
            input: s.to_string(),
            reason,
        };
        let parts: Vec<&str> = s.split(':').collect();
        let [context, user, date, seq] = parts[..] else {
            return Err(err("expected four `:`-separated fields"));
        };
        if date.len() != 8 || !date.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("date must be YYYYMMDD"));
        }
        let date = NaiveDate::parse_from_str(date, "%Y%m%d").map_err(|_| err("invalid date"))?;
        if seq.starts_with('0') || !seq.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("sequence must be a positive integer"));
        }
        let seq: u32 = seq.parse().map_err(|_| err("sequence out of range"))?;
        SessionId::new(context, user, date, seq).map_err(|e| err(e.reason))
    }
}

impl Serialize for SessionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SessionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub text: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMetadata {
    pub created_at: Timestamp,
    pub message_count: usize,
}

#[derive(Debug)]
struct Buffer {
    messages: VecDeque<Message>,
    meta: SessionMetadata,
    last_touched: Timestamp,
}

pub fn messages_key(project: &str, sid: &SessionId) -> String {
    format!("cogmem:{project}:sessions:{sid}:messages")
}

pub fn metadata_key(project: &str, sid: &SessionId) -> String {
    format!("cogmem:{project}:sessions:{sid}:metadata")
}

pub fn queue_key(project: &str) -> String {
    format!("cogmem:{project}:consol_queue")
}

#[derive(Debug)]
pub struct SessionStore {
    clock: SharedClock,
    capacity: usize,
    ttl_ms: i64,
    buffers: Mutex<HashMap<String, Buffer>>,
    queues: Mutex<HashMap<String, VecDeque<SessionId>>>,
}

impl SessionStore {
    pub fn new(clock: SharedClock) -> Self {
        SessionStore::with_limits(clock, DEFAULT_CAPACITY, DEFAULT_TTL_MS)
    }

    pub fn with_limits(clock: SharedClock, capacity: usize, ttl_ms: i64) -> Self {
        assert!(capacity >= 1, "session capacity must be at least 1");
        assert!(ttl_ms >= 1, "session ttl must be positive");
        SessionStore {
            clock,
            capacity,
            ttl_ms,
            buffers: Mutex::new(HashMap::new()),
            queues: Mutex::new(HashMap::new()),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn expired(&self, b: &Buffer, now: Timestamp) -> bool {
        now.millis() - b.last_touched.millis() >= self.ttl_ms
    }

    /// Appends a message and returns the buffer length afterwards.
    pub fn append(&self, project: &str, sid: &SessionId, role: &str, text: &str) -> usize {
        let now = self.clock.now();
        let key = messages_key(project, sid);
        let mut buffers = self.buffers.lock().expect("session lock poisoned");
        if buffers.get(&key).is_some_and(|b| self.expired(b, now)) {
            buffers.remove(&key);
        }
        let buf = buffers.entry(key).or_insert_with(|| Buffer {
            messages: VecDeque::new(),
            meta: SessionMetadata {
                created_at: now,
                message_count: 0,
            },
            last_touched: now,
        });
        buf.messages.push_back(Message {
            role: role.to_string(),
            text: text.to_string(),
            at: now,
        });
        while buf.messages.len() > self.capacity {
            buf.messages.pop_front();
        }
        buf.meta.message_count += 1;
        buf.last_touched = now;
        buf.messages.len()
    }

    pub fn get(&self, project: &str, sid: &SessionId) -> Vec<Message> {
        let now = self.clock.now();
        let buffers = self.buffers.lock().expect("session lock poisoned");
        match buffers.get(&messages_key(project, sid)) {
            Some(b) if !self.expired(b, now) => b.messages.iter().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Creation time and total messages ever appended (including evicted).
    pub fn metadata(&self, project: &str, sid: &SessionId) -> Option<SessionMetadata> {
        let now = self.clock.now();
        let buffers = self.buffers.lock().expect("session lock poisoned");
        buffers
            .get(&messages_key(project, sid))
            .filter(|b| !self.expired(b, now))
            .map(|b| b.meta.clone())
    }

    pub fn clear(&self, project: &str, sid: &SessionId) {
        self.buffers
            .lock()
            .expect("session lock poisoned")
            .remove(&messages_key(project, sid));
    }

    /// Live keys, both message and metadata, sorted.
    pub fn keys(&self) -> Vec<String> {
        let now = self.clock.now();
        let buffers = self.buffers.lock().expect("session lock poisoned");
        let mut out: Vec<String> = buffers
            .iter()
            .filter(|(_, b)| !self.expired(b, now))
            .flat_map(|(k, _)| {
                let base = k.trim_end_matches(":messages");
                [k.clone(), format!("{base}:metadata")]
            })
            .collect();
        out.sort();
        out
    }

    pub fn enqueue_consolidation(&self, project: &str, sid: &SessionId) {
        self.queues
            .lock()
            .expect("session lock poisoned")
            .entry(queue_key(project))
            .or_default()
            .push_back(sid.clone());
    }

    pub fn next_for_consolidation(&self, project: &str) -> Option<SessionId> {
        self.queues
            .lock()
            .expect("session lock poisoned")
            .get_mut(&queue_key(project))?
            .pop_front()
    }

    pub fn queue_len(&self, project: &str) -> usize {
        self.queues
            .lock()
            .expect("session lock poisoned")
            .get(&queue_key(project))
            .map_or(0, VecDeque::len)
    }
}
