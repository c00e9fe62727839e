//! In-engine property graph.
//!
//! Items own append-only revision chains. Typed edges link revisions. Tags are
//! the only mutable layer, and every assignment is kept in a time-indexed
//! history. Each structural change appends to a global event log whose
//! sequence numbers double as consolidation cursors.

mod jsonl;
mod snapshot;
mod types;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::clock::{SharedClock, SystemClock, Timestamp};
use crate::kref::{is_token, Kref};
use crate::retrieval::text::compose_search_text;

pub use jsonl::{export_events_jsonl, export_jsonl, import_jsonl};
pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use types::*;

/// Tag that tracks the current belief of each item.
pub const LATEST_TAG: &str = "latest";
/// Items carrying this tag are protected from automated deprecation.
pub const PUBLISHED_TAG: &str = "published";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("item {0} already exists")]
    DuplicateItem(Kref),
    #[error("unknown item {0}")]
    UnknownItem(Kref),
    #[error("unknown revision {0}")]
    UnknownRevision(RevisionRef),
    #[error("item {0} has no resolvable revision")]
    NoRevision(Kref),
    #[error("item {0} is deprecated (pass include_deprecated to resolve it)")]
    DeprecatedExcluded(Kref),
    #[error("illegal SUPERSEDES edge {from} -> {to}: both ends must be the same item and the source must be newer")]
    IllegalSupersedes { from: RevisionRef, to: RevisionRef },
    #[error("edge source and target are the same revision {0}")]
    SelfEdge(RevisionRef),
    #[error("no open binding of tag `{tag}` on {item}")]
    NoSuchBinding { item: Kref, tag: String },
    #[error("embedding already set on {0}")]
    EmbeddingAlreadySet(RevisionRef),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("timestamp {at} precedes the current binding of `{tag}` on {item}")]
    TimeWentBackwards {
        item: Kref,
        tag: String,
        at: Timestamp,
    },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

type ItemId = usize;

/// Serializable primary state. Everything in [`Graph`] outside this struct is
/// derived and rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub(crate) struct GraphData {
    pub spaces: BTreeSet<String>,
    pub items: Vec<Item>,
    pub revisions: Vec<Vec<Revision>>,
    pub edges: Vec<Edge>,
    pub tag_history: Vec<TagHistoryEntry>,
    pub artifacts: Vec<ArtifactPointer>,
    pub events: Vec<Event>,
}

#[derive(Debug, Default, Clone)]
struct Indexes {
    item_ids: HashMap<Kref, ItemId>,
    out_edges: HashMap<(ItemId, u32), Vec<usize>>,
    in_edges: HashMap<(ItemId, u32), Vec<usize>>,
    /// History entries per (item, tag), in assignment order.
    tag_entries: HashMap<(ItemId, String), Vec<usize>>,
    open_tags: HashMap<(ItemId, String), usize>,
    /// Open tags per revision.
    bound: HashMap<(ItemId, u32), BTreeSet<String>>,
    artifacts_by_revision: HashMap<(ItemId, u32), Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Graph {
    data: GraphData,
    idx: Indexes,
    clock: SharedClock,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new(std::sync::Arc::new(SystemClock))
    }
}

impl Graph {
    pub fn new(clock: SharedClock) -> Self {
        Graph {
            data: GraphData::default(),
            idx: Indexes::default(),
            clock,
        }
    }

    pub(crate) fn from_data(data: GraphData, clock: SharedClock) -> Result<Self> {
        let mut g = Graph {
            data,
            idx: Indexes::default(),
            clock,
        };
        g.rebuild_indexes()?;
        Ok(g)
    }

    pub(crate) fn data(&self) -> &GraphData {
        &self.data
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn set_clock(&mut self, clock: SharedClock) {
        self.clock = clock;
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Latest timestamp recorded anywhere in the graph. A restarted logical
    /// clock must begin after it.
    pub fn max_timestamp(&self) -> Option<Timestamp> {
        let d = &self.data;
        d.items
            .iter()
            .map(|i| i.created_at)
            .chain(d.revisions.iter().flatten().map(|r| r.created_at))
            .chain(
                d.tag_history
                    .iter()
                    .flat_map(|t| std::iter::once(t.assigned_at).chain(t.removed_at)),
            )
            .chain(d.events.iter().map(|e| e.at))
            .max()
    }

    fn rebuild_indexes(&mut self) -> Result<()> {
        let mut idx = Indexes::default();
        if self.data.items.len() != self.data.revisions.len() {
            return Err(StoreError::CorruptSnapshot(
                "item and revision tables disagree".into(),
            ));
        }
        for (id, item) in self.data.items.iter().enumerate() {
            if idx.item_ids.insert(item.kref.clone(), id).is_some() {
                return Err(StoreError::CorruptSnapshot(format!(
                    "duplicate item {}",
                    item.kref
                )));
            }
            for (i, rev) in self.data.revisions[id].iter().enumerate() {
                if rev.seq as usize != i + 1 || rev.item != item.kref {
                    return Err(StoreError::CorruptSnapshot(format!(
                        "revision chain of {} is not contiguous",
                        item.kref
                    )));
                }
            }
        }
        let key = |idx: &Indexes, r: &RevisionRef| -> Result<(ItemId, u32)> {
            let id = *idx
                .item_ids
                .get(&r.item)
                .ok_or_else(|| StoreError::CorruptSnapshot(format!("dangling reference {r}")))?;
            Ok((id, r.seq))
        };
        for (i, e) in self.data.edges.iter().enumerate() {
            let s = key(&idx, &e.source)?;
            let t = key(&idx, &e.target)?;
            idx.out_edges.entry(s).or_default().push(i);
            idx.in_edges.entry(t).or_default().push(i);
        }
        for (i, entry) in self.data.tag_history.iter().enumerate() {
            let id = key(&idx, &entry.revision())?.0;
            let pair = (id, entry.tag.clone());
            idx.tag_entries.entry(pair.clone()).or_default().push(i);
            if entry.is_open() {
                if idx.open_tags.insert(pair, i).is_some() {
                    return Err(StoreError::CorruptSnapshot(format!(
                        "two open bindings of `{}` on {}",
                        entry.tag, entry.item
                    )));
                }
                idx.bound
                    .entry((id, entry.revision_seq))
                    .or_default()
                    .insert(entry.tag.clone());
            }
        }
        for (i, a) in self.data.artifacts.iter().enumerate() {
            let k = key(&idx, &a.revision())?;
            idx.artifacts_by_revision.entry(k).or_default().push(i);
        }
        for (i, ev) in self.data.events.iter().enumerate() {
            if ev.seq != i as u64 + 1 {
                return Err(StoreError::CorruptSnapshot("event log has gaps".into()));
            }
        }
        self.idx = idx;
        Ok(())
    }

    // ----- lookups -------------------------------------------------------

    fn item_id(&self, kref: &Kref) -> Result<ItemId> {
        self.idx
            .item_ids
            .get(&kref.item_ref())
            .copied()
            .ok_or_else(|| StoreError::UnknownItem(kref.item_ref()))
    }

    fn rev_key(&self, r: &RevisionRef) -> Result<(ItemId, u32)> {
        let id = self
            .idx
            .item_ids
            .get(&r.item)
            .copied()
            .ok_or_else(|| StoreError::UnknownRevision(r.clone()))?;
        if r.seq == 0 || r.seq as usize > self.data.revisions[id].len() {
            return Err(StoreError::UnknownRevision(r.clone()));
        }
        Ok((id, r.seq))
    }

    /// Dense position of an item, stable for the lifetime of the graph.
    pub(crate) fn item_index(&self, kref: &Kref) -> Option<usize> {
        self.idx.item_ids.get(&kref.item_ref()).copied()
    }

    pub(crate) fn item_at(&self, id: usize) -> &Item {
        &self.data.items[id]
    }

    pub(crate) fn revision_at(&self, id: usize, seq: u32) -> Option<&Revision> {
        self.data.revisions.get(id)?.get((seq as usize).checked_sub(1)?)
    }

    pub(crate) fn is_bound_at_index(&self, id: usize, seq: u32) -> bool {
        self.idx.bound.get(&(id, seq)).is_some_and(|s| !s.is_empty())
    }

    pub fn contains_item(&self, kref: &Kref) -> bool {
        self.idx.item_ids.contains_key(&kref.item_ref())
    }

    pub fn item(&self, kref: &Kref) -> Result<&Item> {
        Ok(&self.data.items[self.item_id(kref)?])
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.data.items.iter()
    }

    pub fn item_count(&self) -> usize {
        self.data.items.len()
    }

    pub fn spaces(&self) -> &BTreeSet<String> {
        &self.data.spaces
    }

    pub fn revision(&self, r: &RevisionRef) -> Result<&Revision> {
        let (id, seq) = self.rev_key(r)?;
        Ok(&self.data.revisions[id][seq as usize - 1])
    }

    pub fn contains_revision(&self, r: &RevisionRef) -> bool {
        self.rev_key(r).is_ok()
    }

    pub fn revisions_of(&self, item: &Kref) -> Result<&[Revision]> {
        Ok(&self.data.revisions[self.item_id(item)?])
    }

    pub fn all_revisions(&self) -> impl Iterator<Item = &Revision> {
        self.data.revisions.iter().flatten()
    }

    pub fn revision_count(&self) -> usize {
        self.data.revisions.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.data.edges
    }

    pub fn edges_from(&self, r: &RevisionRef) -> impl Iterator<Item = &Edge> {
        self.adjacent(&self.idx.out_edges, r)
    }

    pub fn edges_to(&self, r: &RevisionRef) -> impl Iterator<Item = &Edge> {
        self.adjacent(&self.idx.in_edges, r)
    }

    fn adjacent<'a>(
        &'a self,
        map: &'a HashMap<(ItemId, u32), Vec<usize>>,
        r: &RevisionRef,
    ) -> impl Iterator<Item = &'a Edge> + 'a {
        let ids: &[usize] = match self.rev_key(r) {
            Ok(k) => map.get(&k).map(Vec::as_slice).unwrap_or(&[]),
            Err(_) => &[],
        };
        ids.iter().map(move |&i| &self.data.edges[i])
    }

    pub fn has_edge(&self, source: &RevisionRef, edge_type: EdgeType, target: &RevisionRef) -> bool {
        self.edges_from(source)
            .any(|e| e.edge_type == edge_type && &e.target == target)
    }

    pub fn tag_history(&self) -> &[TagHistoryEntry] {
        &self.data.tag_history
    }

    pub fn artifacts(&self) -> &[ArtifactPointer] {
        &self.data.artifacts
    }

    pub fn artifacts_of(&self, r: &RevisionRef) -> Vec<&ArtifactPointer> {
        match self.rev_key(r) {
            Ok(k) => self
                .idx
                .artifacts_by_revision
                .get(&k)
                .map(|v| v.iter().map(|&i| &self.data.artifacts[i]).collect())
                .unwrap_or_default(),
            Err(_) => Vec::new(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.data.events
    }

    pub fn last_event_seq(&self) -> u64 {
        self.data.events.len() as u64
    }

    /// Sequence number the next appended event will receive.
    pub fn next_event_seq(&self) -> u64 {
        self.last_event_seq() + 1
    }

    // ----- tags ----------------------------------------------------------

    /// Revision currently bound to `tag` on `item`, if any.
    pub fn tag_target(&self, item: &Kref, tag: &str) -> Option<RevisionRef> {
        let id = self.item_id(item).ok()?;
        self.idx
            .open_tags
            .get(&(id, tag.to_string()))
            .map(|&i| self.data.tag_history[i].revision())
    }

    /// Revision bound to `tag` on `item` at time `at`.
    pub fn tag_target_at(&self, item: &Kref, tag: &str, at: Timestamp) -> Option<RevisionRef> {
        let id = self.item_id(item).ok()?;
        self.idx
            .tag_entries
            .get(&(id, tag.to_string()))?
            .iter()
            .rev()
            .map(|&i| &self.data.tag_history[i])
            .find(|e| e.open_at(at))
            .map(TagHistoryEntry::revision)
    }

    /// Open tags on a revision.
    pub fn tags_on(&self, r: &RevisionRef) -> Vec<String> {
        self.rev_key(r)
            .ok()
            .and_then(|k| self.idx.bound.get(&k))
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Open tags on any revision of an item, as `(tag, seq)` pairs.
    pub fn item_tags(&self, item: &Kref) -> Vec<(String, u32)> {
        let Ok(id) = self.item_id(item) else {
            return Vec::new();
        };
        let mut out: Vec<(String, u32)> = self
            .idx
            .open_tags
            .iter()
            .filter(|((i, _), _)| *i == id)
            .map(|((_, tag), &h)| (tag.clone(), self.data.tag_history[h].revision_seq))
            .collect();
        out.sort();
        out
    }

    pub fn is_tag_bound(&self, r: &RevisionRef) -> bool {
        self.rev_key(r)
            .ok()
            .and_then(|k| self.idx.bound.get(&k))
            .is_some_and(|s| !s.is_empty())
    }

    /// Every open binding as `(tag, revision)`.
    pub fn open_bindings(&self) -> Vec<(String, RevisionRef)> {
        let mut out: Vec<(String, RevisionRef)> = self
            .idx
            .open_tags
            .values()
            .map(|&i| {
                let e = &self.data.tag_history[i];
                (e.tag.clone(), e.revision())
            })
            .collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Every binding that was open at `at`.
    pub fn bindings_at(&self, at: Timestamp) -> Vec<(String, RevisionRef)> {
        let mut out: Vec<(String, RevisionRef)> = self
            .data
            .tag_history
            .iter()
            .filter(|e| e.open_at(at))
            .map(|e| (e.tag.clone(), e.revision()))
            .collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Items of kind `bundle` whose revisions CONTAIN any revision of `item`.
    pub fn bundles_containing(&self, item: &Kref) -> Vec<Kref> {
        let Ok(revs) = self.revisions_of(item) else {
            return Vec::new();
        };
        let mut out = BTreeSet::new();
        for rev in revs {
            for e in self.edges_to(&rev.reference()) {
                if e.edge_type == EdgeType::Contains && e.source.item.kind() == "bundle" {
                    out.insert(e.source.item.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    // ----- mutations -----------------------------------------------------

    fn push_event(&mut self, kind: EventKind, subject: EventSubject, at: Timestamp) -> u64 {
        let seq = self.next_event_seq();
        self.data.events.push(Event {
            seq,
            kind,
            subject,
            at,
        });
        seq
    }

    pub fn ensure_space(&mut self, kref: &Kref) {
        let mut path = kref.project().to_string();
        for seg in kref.space_path() {
            path.push('/');
            path.push_str(seg);
            self.data.spaces.insert(path.clone());
        }
    }

    pub fn create_item(&mut self, kref: &Kref, metadata: Metadata) -> Result<&Item> {
        if !kref.is_item_ref() {
            return Err(StoreError::InvalidArgument(format!(
                "{kref} carries a revision pin or artifact; items are addressed without them"
            )));
        }
        if self.contains_item(kref) {
            return Err(StoreError::DuplicateItem(kref.clone()));
        }
        self.ensure_space(kref);
        let id = self.data.items.len();
        self.data.items.push(Item {
            kref: kref.clone(),
            deprecated: false,
            created_at: self.clock.now(),
            metadata,
        });
        self.data.revisions.push(Vec::new());
        self.idx.item_ids.insert(kref.clone(), id);
        Ok(&self.data.items[id])
    }

    /// Returns the existing item untouched, or creates it.
    pub fn ensure_item(&mut self, kref: &Kref, metadata: Metadata) -> Result<&Item> {
        if self.contains_item(kref) {
            return self.item(kref);
        }
        self.create_item(kref, metadata)
    }

    pub fn create_revision(&mut self, item: &Kref, new: NewRevision) -> Result<&Revision> {
        let id = self.item_id(item)?;
        let item_ref = self.data.items[id].kref.clone();
        for atom in &new.content {
            if atom.value.is_empty() {
                return Err(StoreError::InvalidArgument(format!(
                    "empty value in atom {atom}"
                )));
            }
        }
        let at = self.clock.now();
        let seq = self.data.revisions[id].len() as u32 + 1;
        if new.bind_latest {
            if let Some(&open) = self.idx.open_tags.get(&(id, LATEST_TAG.to_string())) {
                if at < self.data.tag_history[open].assigned_at {
                    return Err(StoreError::TimeWentBackwards {
                        item: item_ref,
                        tag: LATEST_TAG.to_string(),
                        at,
                    });
                }
            }
        }
        let keywords = new
            .metadata
            .get(META_KEYWORDS)
            .map(|v| split_list(v))
            .unwrap_or_default();
        let topics = new
            .metadata
            .get(META_TOPICS)
            .map(|v| split_list(v))
            .unwrap_or_default();
        let search_text = compose_search_text(
            item_ref.item_name(),
            item_ref.kind(),
            &new.summary,
            &keywords,
            &topics,
            new.embedding_text.as_deref(),
        );
        let rev = Revision {
            item: item_ref.clone(),
            seq,
            content: new.content,
            summary: new.summary,
            metadata: new.metadata,
            search_text,
            embedding: None,
            embedding_text_override: new.embedding_text,
            created_at: at,
            author: new.author,
        };
        self.data.revisions[id].push(rev);
        let rref = RevisionRef::new(&item_ref, seq);
        self.push_event(EventKind::RevisionCreated, EventSubject::Revision(rref.clone()), at);
        if new.bind_latest {
            self.bind_tag(&item_ref, LATEST_TAG, seq, at)?;
        }
        Ok(&self.data.revisions[id][seq as usize - 1])
    }

    /// Fills in the embedding of a revision. Allowed exactly once.
    pub fn set_embedding(&mut self, r: &RevisionRef, embedding: Vec<f32>) -> Result<()> {
        let (id, seq) = self.rev_key(r)?;
        let rev = &mut self.data.revisions[id][seq as usize - 1];
        if rev.embedding.is_some() {
            return Err(StoreError::EmbeddingAlreadySet(r.clone()));
        }
        rev.embedding = Some(embedding);
        Ok(())
    }

    /// Checks that an edge could be added, without adding it.
    pub fn validate_edge(
        &self,
        source: &RevisionRef,
        edge_type: EdgeType,
        target: &RevisionRef,
    ) -> Result<()> {
        self.rev_key(source)?;
        self.rev_key(target)?;
        if source == target {
            return Err(StoreError::SelfEdge(source.clone()));
        }
        if edge_type == EdgeType::Supersedes
            && (source.item != target.item || source.seq <= target.seq)
        {
            return Err(StoreError::IllegalSupersedes {
                from: source.clone(),
                to: target.clone(),
            });
        }
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        source: &RevisionRef,
        edge_type: EdgeType,
        target: &RevisionRef,
        metadata: Metadata,
    ) -> Result<&Edge> {
        self.validate_edge(source, edge_type, target)?;
        let s = self.rev_key(source)?;
        let t = self.rev_key(target)?;
        let at = self.clock.now();
        let i = self.data.edges.len();
        self.data.edges.push(Edge {
            source: source.clone(),
            edge_type,
            target: target.clone(),
            metadata,
            created_at: at,
        });
        self.idx.out_edges.entry(s).or_default().push(i);
        self.idx.in_edges.entry(t).or_default().push(i);
        self.push_event(
            EventKind::EdgeCreated,
            EventSubject::Edge {
                source: source.clone(),
                edge_type,
                target: target.clone(),
            },
            at,
        );
        Ok(&self.data.edges[i])
    }

    /// Checks that `bind_tag(item, tag, seq, at)` would succeed.
    pub fn validate_bind(&self, item: &Kref, tag: &str, seq: u32, at: Timestamp) -> Result<()> {
        if !is_token(tag) {
            return Err(StoreError::InvalidArgument(format!("invalid tag name `{tag}`")));
        }
        let id = self.item_id(item)?;
        let r = RevisionRef::new(item, seq);
        self.rev_key(&r)?;
        if let Some(&open) = self.idx.open_tags.get(&(id, tag.to_string())) {
            let entry = &self.data.tag_history[open];
            if entry.revision_seq != seq && at < entry.assigned_at {
                return Err(StoreError::TimeWentBackwards {
                    item: item.item_ref(),
                    tag: tag.to_string(),
                    at,
                });
            }
        }
        Ok(())
    }

    /// Points `tag` on `item` at revision `seq`, closing any prior binding.
    /// Re-binding to the already-bound revision is a no-op.
    pub fn bind_tag(
        &mut self,
        item: &Kref,
        tag: &str,
        seq: u32,
        at: Timestamp,
    ) -> Result<TagHistoryEntry> {
        self.validate_bind(item, tag, seq, at)?;
        let id = self.item_id(item)?;
        let key = (id, tag.to_string());
        if let Some(&open) = self.idx.open_tags.get(&key) {
            if self.data.tag_history[open].revision_seq == seq {
                return Ok(self.data.tag_history[open].clone());
            }
            self.close_binding(id, open, at);
        }
        let entry = TagHistoryEntry {
            item: self.data.items[id].kref.clone(),
            tag: tag.to_string(),
            revision_seq: seq,
            assigned_at: at,
            removed_at: None,
        };
        let i = self.data.tag_history.len();
        self.data.tag_history.push(entry.clone());
        self.idx.tag_entries.entry(key.clone()).or_default().push(i);
        self.idx.open_tags.insert(key, i);
        self.idx
            .bound
            .entry((id, seq))
            .or_default()
            .insert(tag.to_string());
        Ok(entry)
    }

    fn close_binding(&mut self, id: ItemId, hist: usize, at: Timestamp) {
        let entry = &mut self.data.tag_history[hist];
        entry.removed_at = Some(at.max(entry.assigned_at));
        let tag = entry.tag.clone();
        let seq = entry.revision_seq;
        self.idx.open_tags.remove(&(id, tag.clone()));
        if let Some(set) = self.idx.bound.get_mut(&(id, seq)) {
            set.remove(&tag);
            if set.is_empty() {
                self.idx.bound.remove(&(id, seq));
            }
        }
    }

    pub fn remove_tag(&mut self, item: &Kref, tag: &str, at: Timestamp) -> Result<()> {
        let id = self.item_id(item)?;
        let open = self
            .idx
            .open_tags
            .get(&(id, tag.to_string()))
            .copied()
            .ok_or_else(|| StoreError::NoSuchBinding {
                item: item.item_ref(),
                tag: tag.to_string(),
            })?;
        if at < self.data.tag_history[open].assigned_at {
            return Err(StoreError::TimeWentBackwards {
                item: item.item_ref(),
                tag: tag.to_string(),
                at,
            });
        }
        self.close_binding(id, open, at);
        Ok(())
    }

    /// Resolves a kref to a revision: the pinned one, or whatever `latest`
    /// pointed at (at `at`, or now).
    pub fn resolve(
        &self,
        k: &Kref,
        at: Option<Timestamp>,
        include_deprecated: bool,
    ) -> Result<&Revision> {
        let item = self.item(k)?;
        if item.deprecated && !include_deprecated {
            return Err(StoreError::DeprecatedExcluded(item.kref.clone()));
        }
        let seq = match k.revision_pin() {
            Some(seq) => seq,
            None => {
                let target = match at {
                    Some(t) => self.tag_target_at(k, LATEST_TAG, t),
                    None => self.tag_target(k, LATEST_TAG),
                };
                target
                    .ok_or_else(|| StoreError::NoRevision(k.item_ref()))?
                    .seq
            }
        };
        self.revision(&RevisionRef::new(k, seq))
            .map_err(|_| StoreError::NoRevision(k.clone()))
    }

    /// Sets or clears the deprecation flag. Setting it emits one
    /// `revision.deprecated` event for the item's current revision.
    pub fn set_deprecated(&mut self, item: &Kref, value: bool, at: Timestamp) -> Result<()> {
        let id = self.item_id(item)?;
        if self.data.items[id].deprecated == value {
            return Ok(());
        }
        self.data.items[id].deprecated = value;
        if value {
            let kref = self.data.items[id].kref.clone();
            let subject = self
                .tag_target(&kref, LATEST_TAG)
                .map(|r| r.seq)
                .or_else(|| self.data.revisions[id].last().map(|r| r.seq));
            if let Some(seq) = subject {
                self.push_event(
                    EventKind::RevisionDeprecated,
                    EventSubject::Revision(RevisionRef::new(&kref, seq)),
                    at,
                );
            }
        }
        Ok(())
    }

    pub fn add_artifact(
        &mut self,
        r: &RevisionRef,
        name: &str,
        location: &str,
        media_hint: Option<&str>,
    ) -> Result<&ArtifactPointer> {
        let key = self.rev_key(r)?;
        if !is_token(name) {
            return Err(StoreError::InvalidArgument(format!(
                "invalid artifact name `{name}`"
            )));
        }
        if location.is_empty() {
            return Err(StoreError::InvalidArgument("empty artifact location".into()));
        }
        let i = self.data.artifacts.len();
        self.data.artifacts.push(ArtifactPointer {
            item: r.item.clone(),
            revision_seq: r.seq,
            name: name.to_string(),
            location: location.to_string(),
            media_hint: media_hint.map(str::to_string),
        });
        self.idx.artifacts_by_revision.entry(key).or_default().push(i);
        Ok(&self.data.artifacts[i])
    }

    /// Events with `seq > from_cursor` (all events when no cursor), oldest first.
    pub fn read_events(&self, from_cursor: Option<u64>, limit: usize) -> &[Event] {
        let start = from_cursor.unwrap_or(0).min(self.last_event_seq()) as usize;
        let end = start.saturating_add(limit.max(1)).min(self.data.events.len());
        &self.data.events[start..end]
    }

    /// Adds `member` to a bundle item (kind `bundle`) via a CONTAINS edge
    /// from the bundle's current revision.
    pub fn add_to_bundle(&mut self, bundle: &Kref, member: &RevisionRef) -> Result<&Edge> {
        if bundle.kind() != "bundle" {
            return Err(StoreError::InvalidArgument(format!(
                "{bundle} is not a bundle item"
            )));
        }
        let source = self
            .tag_target(bundle, LATEST_TAG)
            .ok_or_else(|| StoreError::NoRevision(bundle.item_ref()))?;
        self.add_edge(&source, EdgeType::Contains, member, Metadata::new())
    }

    pub fn bundle_members(&self, bundle: &Kref) -> Vec<RevisionRef> {
        let Ok(revs) = self.revisions_of(bundle) else {
            return Vec::new();
        };
        let mut out = BTreeSet::new();
        for rev in revs {
            for e in self.edges_from(&rev.reference()) {
                if e.edge_type == EdgeType::Contains {
                    out.insert(e.target.clone());
                }
            }
        }
        out.into_iter().collect()
    }
}
