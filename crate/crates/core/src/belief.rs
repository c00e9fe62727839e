//! Belief change over tag bindings.
//!
//! The belief base is the union of the content of every revision some tag
//! currently points at. Revision, contraction and expansion are expressed as
//! revision creation, tag moves and soft deprecation; nothing is deleted.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::clock::Timestamp;
use crate::kref::Kref;
use crate::store::{
    BeliefAtom, Content, EdgeType, Graph, Metadata, NewRevision, Predicate, RevisionRef,
    StoreError, TagHistoryEntry, LATEST_TAG,
};

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("revision content must not be empty")]
    EmptyContent,
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = BeliefError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BeliefBase {
    pub atoms: Content,
    pub as_of: Option<Timestamp>,
}

impl BeliefBase {
    pub fn contains(&self, atom: &BeliefAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_subset(&self, other: &BeliefBase) -> bool {
        self.atoms.is_subset(&other.atoms)
    }

    /// Values held for `(subject, predicate)`.
    pub fn values(&self, subject: &Kref, predicate: Predicate) -> Vec<&str> {
        self.atoms
            .iter()
            .filter(|a| &a.subject == subject && a.predicate == predicate)
            .map(|a| a.value.as_str())
            .collect()
    }
}

/// `(tag, revision)` pairs whose revision content holds a given atom.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetSet {
    pub pairs: BTreeSet<(String, RevisionRef)>,
}

impl TargetSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn items(&self) -> BTreeSet<Kref> {
        self.pairs.iter().map(|(_, r)| r.item.clone()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractionOutcome {
    pub removed_tags: Vec<(String, RevisionRef)>,
    pub deprecated_items: Vec<Kref>,
}

/// Deliberate breakage used by the compliance harness to prove its checks
/// can fail.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultFlags {
    pub skip_supersedes: bool,
}

fn bindings(graph: &Graph, at: Option<Timestamp>) -> Vec<(String, RevisionRef)> {
    match at {
        Some(t) => graph.bindings_at(t),
        None => graph.open_bindings(),
    }
}

fn union_of(graph: &Graph, refs: impl Iterator<Item = RevisionRef>, at: Option<Timestamp>) -> BeliefBase {
    let mut atoms = Content::new();
    for r in refs {
        if let Ok(rev) = graph.revision(&r) {
            atoms.extend(rev.content().iter().cloned());
        }
    }
    BeliefBase { atoms, as_of: at }
}

/// Union of the content of all tag-bound revisions, now or at `at`.
pub fn belief_base(graph: &Graph, at: Option<Timestamp>) -> BeliefBase {
    union_of(graph, bindings(graph, at).into_iter().map(|(_, r)| r), at)
}

/// The belief base restricted to items that are not deprecated.
pub fn retrieval_surface(graph: &Graph, at: Option<Timestamp>) -> BeliefBase {
    let refs = bindings(graph, at)
        .into_iter()
        .map(|(_, r)| r)
        .filter(|r| graph.item(&r.item).is_ok_and(|i| !i.deprecated));
    union_of(graph, refs, at)
}

/// Every open binding whose revision content contains `atom`.
pub fn targets(graph: &Graph, atom: &BeliefAtom) -> TargetSet {
    let pairs = graph
        .open_bindings()
        .into_iter()
        .filter(|(_, r)| graph.revision(r).is_ok_and(|rev| rev.content().contains(atom)))
        .collect();
    TargetSet { pairs }
}

/// Adds `atom` to the current content of `item` as a new revision and points
/// `latest` at it. The base grows by exactly `atom`.
pub fn expand(graph: &mut Graph, item: &Kref, atom: BeliefAtom) -> Result<RevisionRef> {
    let item = graph.item(item)?.kref.clone();
    let current = graph
        .tag_target(&item, LATEST_TAG)
        .map(|r| graph.revision(&r).map(|rev| (rev.content().clone(), rev.summary().to_string())))
        .transpose()?;
    let (mut content, prior_summary) = current.unwrap_or_default();
    let summary = if atom.predicate == Predicate::Summary {
        atom.value.clone()
    } else {
        prior_summary
    };
    content.insert(atom);
    let rev = graph.create_revision(&item, NewRevision::new(summary).content(content))?;
    Ok(rev.reference())
}

/// Revision by replacement: a new revision with `new`'s content becomes
/// `latest` and SUPERSEDES the revision `latest` pointed at before (or the
/// newest revision when no tag points anywhere).
pub fn revise(graph: &mut Graph, item: &Kref, new: NewRevision) -> Result<RevisionRef> {
    revise_with_faults(graph, item, new, FaultFlags::default())
}

pub fn revise_with_faults(
    graph: &mut Graph,
    item: &Kref,
    mut new: NewRevision,
    faults: FaultFlags,
) -> Result<RevisionRef> {
    if new.content.is_empty() {
        return Err(BeliefError::EmptyContent);
    }
    let item = graph.item(item)?.kref.clone();
    let prior = graph
        .tag_target(&item, LATEST_TAG)
        .or_else(|| graph.revisions_of(&item).ok()?.last().map(|r| r.reference()));
    new.bind_latest = true;
    let created = graph.create_revision(&item, new)?.reference();
    if let Some(prior) = prior {
        if !faults.skip_supersedes {
            graph.add_edge(&created, EdgeType::Supersedes, &prior, Metadata::new())?;
        }
    }
    Ok(created)
}

/// Removes every binding that makes `atom` believed and deprecates the
/// items involved. Contracting an atom nobody holds changes nothing.
pub fn contract(graph: &mut Graph, atom: &BeliefAtom, at: Timestamp) -> Result<ContractionOutcome> {
    let set = targets(graph, atom);
    for (tag, r) in &set.pairs {
        let open = graph
            .tag_history()
            .iter()
            .find(|e| e.is_open() && &e.item == &r.item && &e.tag == tag);
        if open.is_some_and(|e| at < e.assigned_at) {
            return Err(StoreError::TimeWentBackwards {
                item: r.item.clone(),
                tag: tag.clone(),
                at,
            }
            .into());
        }
    }
    let mut outcome = ContractionOutcome::default();
    for (tag, r) in &set.pairs {
        graph.remove_tag(&r.item, tag, at)?;
        outcome.removed_tags.push((tag.clone(), r.clone()));
    }
    for item in set.items() {
        if !graph.item(&item)?.deprecated {
            graph.set_deprecated(&item, true, at)?;
            outcome.deprecated_items.push(item);
        }
    }
    Ok(outcome)
}

/// Re-points `tag` on `item` at an earlier (or any existing) revision.
pub fn rollback(
    graph: &mut Graph,
    item: &Kref,
    tag: &str,
    seq: u32,
    at: Timestamp,
) -> Result<TagHistoryEntry> {
    Ok(graph.bind_tag(item, tag, seq, at)?)
}

/// Tag-bound atoms elsewhere in the graph that conflict with `content`
/// (same subject and predicate, different value).
pub fn conflict_scan(graph: &Graph, content: &Content) -> Vec<(RevisionRef, BeliefAtom)> {
    let mut out = BTreeSet::new();
    for (_, r) in graph.open_bindings() {
        let Ok(rev) = graph.revision(&r) else { continue };
        for held in rev.content() {
            if content.iter().any(|a| a.conflicts_with(held)) {
                out.insert((r.clone(), held.clone()));
            }
        }
    }
    out.into_iter().collect()
}

/// Pairs of atoms in `base` that conflict with each other.
pub fn conflicts_in(base: &BeliefBase) -> Vec<(BeliefAtom, BeliefAtom)> {
    let atoms: Vec<&BeliefAtom> = base.atoms.iter().collect();
    let mut out = Vec::new();
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            if a.conflicts_with(b) {
                out.push(((*a).clone(), (*b).clone()));
            }
        }
    }
    out
}
