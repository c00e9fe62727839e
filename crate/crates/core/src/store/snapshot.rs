//! Single-file binary snapshot.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "KMHO1" | version u16 | section count u8
//! repeated: section id u8 | payload length u64 | payload | crc32(payload) u32
//! ```
//!
//! Sections appear in id order: items, revisions, edges, tag history,
//! events, artifacts, spaces. Payloads are bincode-encoded tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{EdgeType, Event, EventKind, EventSubject, Graph, GraphData, Result, RevisionRef, StoreError};
use crate::clock::{SharedClock, Timestamp};

/// Event layout for the binary format, which cannot carry the untagged
/// subject used in JSON.
#[derive(serde::Serialize, serde::Deserialize)]
struct StoredEvent {
    seq: u64,
    kind: EventKind,
    subject: StoredSubject,
    at: Timestamp,
}

#[derive(serde::Serialize, serde::Deserialize)]
enum StoredSubject {
    Revision(RevisionRef),
    Edge(RevisionRef, EdgeType, RevisionRef),
}

impl From<&Event> for StoredEvent {
    fn from(e: &Event) -> Self {
        let subject = match &e.subject {
            EventSubject::Revision(r) => StoredSubject::Revision(r.clone()),
            EventSubject::Edge {
                source,
                edge_type,
                target,
            } => StoredSubject::Edge(source.clone(), *edge_type, target.clone()),
        };
        StoredEvent {
            seq: e.seq,
            kind: e.kind,
            subject,
            at: e.at,
        }
    }
}

impl From<StoredEvent> for Event {
    fn from(e: StoredEvent) -> Self {
        let subject = match e.subject {
            StoredSubject::Revision(r) => EventSubject::Revision(r),
            StoredSubject::Edge(source, edge_type, target) => EventSubject::Edge {
                source,
                edge_type,
                target,
            },
        };
        Event {
            seq: e.seq,
            kind: e.kind,
            subject,
            at: e.at,
        }
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"KMHO1";
pub const SNAPSHOT_VERSION: u16 = 1;

const SECTION_ITEMS: u8 = 1;
const SECTION_REVISIONS: u8 = 2;
const SECTION_EDGES: u8 = 3;
const SECTION_TAGS: u8 = 4;
const SECTION_EVENTS: u8 = 5;
const SECTION_ARTIFACTS: u8 = 6;
const SECTION_SPACES: u8 = 7;
const SECTION_COUNT: u8 = 7;

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::CorruptSnapshot(msg.into())
}

fn put_section<T: Serialize>(out: &mut Vec<u8>, id: u8, value: &T) -> Result<()> {
    let payload =
        bincode::serialize(value).map_err(|e| corrupt(format!("encoding section {id}: {e}")))?;
    out.push(id);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn section<T: DeserializeOwned>(&mut self, expected: u8) -> Result<T> {
        let id = self.u8()?;
        if id != expected {
            return Err(corrupt(format!("expected section {expected}, found {id}")));
        }
        let len = usize::try_from(self.u64()?).map_err(|_| corrupt("section too large"))?;
        let payload = self.take(len)?;
        let crc = self.u32()?;
        if crc32fast::hash(payload) != crc {
            return Err(corrupt(format!("checksum mismatch in section {id}")));
        }
        bincode::deserialize(payload).map_err(|e| corrupt(format!("decoding section {id}: {e}")))
    }
}

impl Graph {
    pub fn to_snapshot_bytes(&self) -> Result<Vec<u8>> {
        let d = self.data();
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.push(SECTION_COUNT);
        put_section(&mut out, SECTION_ITEMS, &d.items)?;
        put_section(&mut out, SECTION_REVISIONS, &d.revisions)?;
        put_section(&mut out, SECTION_EDGES, &d.edges)?;
        put_section(&mut out, SECTION_TAGS, &d.tag_history)?;
        let events: Vec<StoredEvent> = d.events.iter().map(StoredEvent::from).collect();
        put_section(&mut out, SECTION_EVENTS, &events)?;
        put_section(&mut out, SECTION_ARTIFACTS, &d.artifacts)?;
        put_section(&mut out, SECTION_SPACES, &d.spaces)?;
        Ok(out)
    }

    pub fn from_snapshot_bytes(bytes: &[u8], clock: SharedClock) -> Result<Graph> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u16()?;
        if version != SNAPSHOT_VERSION {
            return Err(corrupt(format!("unsupported snapshot version {version}")));
        }
        if r.u8()? != SECTION_COUNT {
            return Err(corrupt("unexpected section count"));
        }
        let data = GraphData {
            items: r.section(SECTION_ITEMS)?,
            revisions: r.section(SECTION_REVISIONS)?,
            edges: r.section(SECTION_EDGES)?,
            tag_history: r.section(SECTION_TAGS)?,
            events: r
                .section::<Vec<StoredEvent>>(SECTION_EVENTS)?
                .into_iter()
                .map(Event::from)
                .collect(),
            artifacts: r.section(SECTION_ARTIFACTS)?,
            spaces: r.section(SECTION_SPACES)?,
        };
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes after last section"));
        }
        Graph::from_data(data, clock)
    }

    /// Writes the snapshot via a temporary file and rename.
    pub fn snapshot(&self, path: &Path) -> Result<()> {
        let bytes = self.to_snapshot_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, clock: SharedClock) -> Result<Graph> {
        let bytes = fs::read(path)?;
        Graph::from_snapshot_bytes(&bytes, clock)
    }
}
