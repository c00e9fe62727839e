use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clock::Timestamp;
use crate::kref::{Kref, KrefError};

pub type Metadata = BTreeMap<String, String>;

pub const META_SCHEMA: &str = "schema";
pub const META_TYPE: &str = "type";
pub const META_TOPICS: &str = "topics";
pub const META_KEYWORDS: &str = "keywords";

/// Splits a comma-separated metadata list, trimming blanks.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// A specific revision of an item.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RevisionRef {
    pub item: Kref,
    pub seq: u32,
}

impl RevisionRef {
    pub fn new(item: &Kref, seq: u32) -> Self {
        RevisionRef {
            item: item.item_ref(),
            seq,
        }
    }

    pub fn kref(&self) -> Kref {
        self.item.with_revision(self.seq)
    }

    /// Accepts only krefs that carry a revision pin and no artifact.
    pub fn from_kref(k: &Kref) -> Option<Self> {
        match (k.revision_pin(), k.artifact_name()) {
            (Some(seq), None) => Some(RevisionRef::new(k, seq)),
            _ => None,
        }
    }
}

impl Ord for RevisionRef {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.item.cmp(&other.item).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for RevisionRef {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RevisionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kref())
    }
}

impl FromStr for RevisionRef {
    type Err = KrefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = Kref::parse(s)?;
        RevisionRef::from_kref(&k).ok_or(KrefError::Malformed {
            input: s.to_string(),
            reason: "expected a revision pin (`?r=N`) and no artifact".into(),
        })
    }
}

impl Serialize for RevisionRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RevisionRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predicate {
    Summary,
    Topic,
    Keyword,
    Type,
    Tag,
    EdgeType,
}

impl Predicate {
    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Summary => "summary",
            Predicate::Topic => "topic",
            Predicate::Keyword => "keyword",
            Predicate::Type => "type",
            Predicate::Tag => "tag",
            Predicate::EdgeType => "edge-type",
        }
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "summary" => Predicate::Summary,
            "topic" => Predicate::Topic,
            "keyword" => Predicate::Keyword,
            "type" => Predicate::Type,
            "tag" => Predicate::Tag,
            "edge-type" => Predicate::EdgeType,
            other => return Err(format!("unknown predicate `{other}`")),
        })
    }
}

/// Ground triple `<item, predicate, value>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeliefAtom {
    pub subject: Kref,
    pub predicate: Predicate,
    pub value: String,
}

impl BeliefAtom {
    pub fn new(subject: &Kref, predicate: Predicate, value: impl Into<String>) -> Self {
        BeliefAtom {
            subject: subject.item_ref(),
            predicate,
            value: value.into(),
        }
    }

    pub fn summary(subject: &Kref, value: impl Into<String>) -> Self {
        Self::new(subject, Predicate::Summary, value)
    }

    /// Same subject and predicate, different value.
    pub fn conflicts_with(&self, other: &BeliefAtom) -> bool {
        self.subject == other.subject
            && self.predicate == other.predicate
            && self.value != other.value
    }
}

impl fmt::Display for BeliefAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{}, {}, {:?}>",
            self.subject,
            self.predicate.as_str(),
            self.value
        )
    }
}

pub type Content = BTreeSet<BeliefAtom>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeType {
    DependsOn,
    DerivedFrom,
    Supersedes,
    Referenced,
    Contains,
    CreatedFrom,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        EdgeType::DependsOn,
        EdgeType::DerivedFrom,
        EdgeType::Supersedes,
        EdgeType::Referenced,
        EdgeType::Contains,
        EdgeType::CreatedFrom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::DependsOn => "DEPENDS_ON",
            EdgeType::DerivedFrom => "DERIVED_FROM",
            EdgeType::Supersedes => "SUPERSEDES",
            EdgeType::Referenced => "REFERENCED",
            EdgeType::Contains => "CONTAINS",
            EdgeType::CreatedFrom => "CREATED_FROM",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        EdgeType::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| format!("unknown edge type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub kref: Kref,
    pub deprecated: bool,
    pub created_at: Timestamp,
    pub metadata: Metadata,
}

impl Item {
    pub fn kind(&self) -> &str {
        self.kref.kind()
    }
}

/// Immutable content snapshot. Only `embedding` may be filled in later, once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub(crate) item: Kref,
    pub(crate) seq: u32,
    pub(crate) content: Content,
    pub(crate) summary: String,
    pub(crate) metadata: Metadata,
    pub(crate) search_text: String,
    pub(crate) embedding: Option<Vec<f32>>,
    pub(crate) embedding_text_override: Option<String>,
    pub(crate) created_at: Timestamp,
    pub(crate) author: String,
}

impl Revision {
    pub fn item(&self) -> &Kref {
        &self.item
    }

    pub fn seq(&self) -> u32 {
        self.seq
    }

    pub fn reference(&self) -> RevisionRef {
        RevisionRef::new(&self.item, self.seq)
    }

    pub fn kref(&self) -> Kref {
        self.item.with_revision(self.seq)
    }

    pub fn content(&self) -> &Content {
        &self.content
    }

    pub fn summary(&self) -> &str {
        &self.summary
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn search_text(&self) -> &str {
        &self.search_text
    }

    pub fn embedding(&self) -> Option<&[f32]> {
        self.embedding.as_deref()
    }

    pub fn embedding_text_override(&self) -> Option<&str> {
        self.embedding_text_override.as_deref()
    }

    pub fn created_at(&self) -> Timestamp {
        self.created_at
    }

    pub fn author(&self) -> &str {
        &self.author
    }

    pub fn topics(&self) -> Vec<String> {
        self.metadata
            .get(META_TOPICS)
            .map(|v| split_list(v))
            .unwrap_or_default()
    }

    pub fn keywords(&self) -> Vec<String> {
        self.metadata
            .get(META_KEYWORDS)
            .map(|v| split_list(v))
            .unwrap_or_default()
    }
}

/// Input for [`Graph::create_revision`](super::Graph::create_revision).
#[derive(Debug, Clone)]
pub struct NewRevision {
    pub content: Content,
    pub summary: String,
    pub metadata: Metadata,
    pub author: String,
    pub embedding_text: Option<String>,
    /// Re-point the `latest` tag at the new revision.
    pub bind_latest: bool,
}

impl NewRevision {
    pub fn new(summary: impl Into<String>) -> Self {
        NewRevision {
            content: Content::new(),
            summary: summary.into(),
            metadata: Metadata::new(),
            author: "engine".to_string(),
            embedding_text: None,
            bind_latest: true,
        }
    }

    pub fn content(mut self, atoms: impl IntoIterator<Item = BeliefAtom>) -> Self {
        self.content.extend(atoms);
        self
    }

    pub fn meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn metadata(mut self, metadata: Metadata) -> Self {
        self.metadata.extend(metadata);
        self
    }

    pub fn author(mut self, author: impl Into<String>) -> Self {
        self.author = author.into();
        self
    }

    pub fn embedding_text(mut self, text: impl Into<String>) -> Self {
        self.embedding_text = Some(text.into());
        self
    }

    pub fn without_latest(mut self) -> Self {
        self.bind_latest = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: RevisionRef,
    pub edge_type: EdgeType,
    pub target: RevisionRef,
    pub metadata: Metadata,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagHistoryEntry {
    pub item: Kref,
    pub tag: String,
    pub revision_seq: u32,
    pub assigned_at: Timestamp,
    pub removed_at: Option<Timestamp>,
}

impl TagHistoryEntry {
    /// Bindings cover the half-open interval `[assigned_at, removed_at)`.
    pub fn open_at(&self, at: Timestamp) -> bool {
        self.assigned_at <= at && self.removed_at.is_none_or(|r| r > at)
    }

    pub fn is_open(&self) -> bool {
        self.removed_at.is_none()
    }

    pub fn revision(&self) -> RevisionRef {
        RevisionRef::new(&self.item, self.revision_seq)
    }
}

/// Pointer to raw content held outside the graph. The location is never read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactPointer {
    pub item: Kref,
    pub revision_seq: u32,
    pub name: String,
    pub location: String,
    pub media_hint: Option<String>,
}

impl ArtifactPointer {
    pub fn kref(&self) -> Kref {
        // Names are validated on insertion.
        self.item
            .with_revision(self.revision_seq)
            .with_artifact(&self.name)
            .expect("artifact name validated on insertion")
    }

    pub fn revision(&self) -> RevisionRef {
        RevisionRef::new(&self.item, self.revision_seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "revision.created")]
    RevisionCreated,
    #[serde(rename = "edge.created")]
    EdgeCreated,
    #[serde(rename = "revision.deprecated")]
    RevisionDeprecated,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RevisionCreated => "revision.created",
            EventKind::EdgeCreated => "edge.created",
            EventKind::RevisionDeprecated => "revision.deprecated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventSubject {
    Revision(RevisionRef),
    Edge {
        source: RevisionRef,
        #[serde(rename = "type")]
        edge_type: EdgeType,
        target: RevisionRef,
    },
}

impl EventSubject {
    /// Revisions the event is about: the revision itself, or both edge ends.
    pub fn revisions(&self) -> Vec<&RevisionRef> {
        match self {
            EventSubject::Revision(r) => vec![r],
            EventSubject::Edge { source, target, .. } => vec![source, target],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub subject: EventSubject,
    pub at: Timestamp,
}
