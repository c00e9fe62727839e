//! Dream State: cursor-driven consolidation under safety guards.
//!
//! A run reads events past the persisted cursor, picks the newest revision
//! of each touched episodic item, asks an [`Assessor`] for judgements and
//! applies them subject to dry-run, published protection, a deprecation
//! circuit breaker and per-action error isolation. The cursor and an audit
//! report are stored on a fresh revision of an internal item, so a run that
//! stops early simply leaves the old cursor in place. Every action is
//! checked against the graph before it is applied, which makes replaying a
//! range of events after an interruption harmless.

mod assessor;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::clock::Timestamp;
use crate::kref::{is_token, Kref};
use crate::store::{
    EdgeType, Graph, Metadata, NewRevision, RevisionRef, StoreError, LATEST_TAG, PUBLISHED_TAG,
};

pub use assessor::{
    default_assessor, Assessment, AssessmentInput, Assessor, AssessorError, HttpAssessor,
    RuleAssessor, ASSESSOR_TOKEN_ENV, ASSESSOR_URL_ENV,
};
pub use report::{cursor_token, parse_cursor_token, render_markdown};

pub const DREAM_SPACE: &str = "_dream_state";
pub const DREAM_ITEM: &str = "_dream_state";
pub const DREAM_KIND: &str = "cursor";
pub const CURSOR_KEY: &str = "cursor";
pub const CURSOR_TIME_KEY: &str = "cursor_at";
pub const REPORT_ARTIFACT: &str = "report";
const DREAM_AUTHOR: &str = "dream-state";

/// Tags an assessor may not hand out.
pub const RESERVED_TAGS: [&str; 2] = [LATEST_TAG, PUBLISHED_TAG];

pub fn dream_item(project: &str) -> Kref {
    Kref::new(project, &[DREAM_SPACE], DREAM_ITEM, DREAM_KIND)
        .expect("project names are validated tokens")
}

/// Where to stop a run early. Used to exercise resumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interrupt {
    /// Stop once stage `n` (1..=9) has completed.
    AfterStage(u8),
    /// Stop during stage 7 after this many mutations were applied.
    AfterMutations(usize),
}

#[derive(Debug, Clone)]
pub struct DreamOptions {
    pub dry_run: bool,
    pub max_deprecation_ratio: f64,
    pub allow_published_deprecation: bool,
    pub batch_size: usize,
    /// Item kinds that are assessed; `None` admits every kind.
    pub kinds: Option<BTreeSet<String>>,
    /// Location recorded on the report artifact; `{cursor}` is replaced by
    /// the new cursor value.
    pub report_location: Option<String>,
    pub interrupt: Option<Interrupt>,
}

impl Default for DreamOptions {
    fn default() -> Self {
        DreamOptions {
            dry_run: false,
            max_deprecation_ratio: 0.5,
            allow_published_deprecation: false,
            batch_size: 20,
            kinds: Some(BTreeSet::from(["conversation".to_string()])),
            report_location: None,
            interrupt: None,
        }
    }
}

impl DreamOptions {
    pub fn validate(&self) -> Result<(), DreamError> {
        if !(0.1..=0.9).contains(&self.max_deprecation_ratio) {
            return Err(DreamError::InvalidOptions(format!(
                "max_deprecation_ratio {} is outside 0.1..=0.9",
                self.max_deprecation_ratio
            )));
        }
        if self.batch_size == 0 {
            return Err(DreamError::InvalidOptions("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest number of deprecations one run may apply.
    pub fn deprecation_cap(&self, assessed: usize) -> usize {
        (self.max_deprecation_ratio * assessed as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    Applied,
    Skipped,
    Failed,
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionRecord {
    pub target: Kref,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationshipRecord {
    pub source: RevisionRef,
    pub target: RevisionRef,
    pub edge_type: EdgeType,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DreamReport {
    pub project: String,
    pub started_at: Timestamp,
    pub dry_run: bool,
    pub events_processed: usize,
    pub memories_assessed: usize,
    pub duration_ms: u64,
    pub deprecated: Vec<ActionRecord>,
    pub metadata_updated: Vec<ActionRecord>,
    pub tags_added: Vec<ActionRecord>,
    pub relationships_created: Vec<RelationshipRecord>,
    pub skipped: Vec<ActionRecord>,
    pub failed: Vec<ActionRecord>,
    pub capped: Vec<ActionRecord>,
    pub published_overrides: Vec<Kref>,
    pub circuit_breaker_tripped: bool,
    pub previous_cursor: Option<u64>,
    pub new_cursor: u64,
    /// Final disposition of each assessed memory.
    pub dispositions: Vec<(RevisionRef, Disposition)>,
    pub cursor_revision: Option<RevisionRef>,
    /// Location stored on the report artifact.
    pub report_location: Option<String>,
}

impl DreamReport {
    fn new(project: &str, started_at: Timestamp, dry_run: bool) -> Self {
        DreamReport {
            project: project.to_string(),
            started_at,
            dry_run,
            events_processed: 0,
            memories_assessed: 0,
            duration_ms: 0,
            deprecated: Vec::new(),
            metadata_updated: Vec::new(),
            tags_added: Vec::new(),
            relationships_created: Vec::new(),
            skipped: Vec::new(),
            failed: Vec::new(),
            capped: Vec::new(),
            published_overrides: Vec::new(),
            circuit_breaker_tripped: false,
            previous_cursor: None,
            new_cursor: 0,
            dispositions: Vec::new(),
            cursor_revision: None,
            report_location: None,
        }
    }

    pub fn markdown(&self) -> String {
        render_markdown(self)
    }
}

#[derive(Debug, Error)]
pub enum DreamError {
    #[error("invalid dream options: {0}")]
    InvalidOptions(String),
    #[error("cursor on {item} is corrupt: {value:?}")]
    CursorCorrupt { item: Kref, value: String },
    #[error("run interrupted after stage {stage}")]
    Interrupted { stage: u8, report: Box<DreamReport> },
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct Run<'a> {
    graph: &'a mut Graph,
    opts: &'a DreamOptions,
    report: DreamReport,
    mutations: usize,
    clock_start: Instant,
}

impl Run<'_> {
    fn checkpoint(&mut self, stage: u8) -> Result<(), DreamError> {
        if self.opts.interrupt == Some(Interrupt::AfterStage(stage)) {
            return Err(self.interrupted(stage));
        }
        Ok(())
    }

    fn interrupted(&mut self, stage: u8) -> DreamError {
        self.report.duration_ms = self.clock_start.elapsed().as_millis() as u64;
        DreamError::Interrupted {
            stage,
            report: Box::new(self.report.clone()),
        }
    }

    /// Counts an applied mutation and honours a mid-apply interrupt.
    fn mutated(&mut self) -> Result<(), DreamError> {
        self.mutations += 1;
        if self.opts.interrupt == Some(Interrupt::AfterMutations(self.mutations)) {
            return Err(self.interrupted(7));
        }
        Ok(())
    }
}

fn load_cursor(graph: &Graph, item: &Kref) -> Result<Option<u64>, DreamError> {
    if !graph.contains_item(item) {
        return Ok(None);
    }
    let Some(r) = graph.tag_target(item, LATEST_TAG) else {
        return Ok(None);
    };
    let rev = graph.revision(&r)?;
    match rev.metadata().get(CURSOR_KEY) {
        None => Ok(None),
        Some(v) => v.parse::<u64>().map(Some).map_err(|_| DreamError::CursorCorrupt {
            item: item.clone(),
            value: v.clone(),
        }),
    }
}

/// Cursor persisted by the last completed run, if any.
pub fn stored_cursor(graph: &Graph, project: &str) -> Result<Option<u64>, DreamError> {
    load_cursor(graph, &dream_item(project))
}

/// Runs the nine-stage pipeline for `project`.
pub fn run(
    graph: &mut Graph,
    project: &str,
    assessor: &dyn Assessor,
    opts: &DreamOptions,
) -> Result<DreamReport, DreamError> {
    opts.validate()?;
    if !is_token(project) {
        return Err(DreamError::InvalidOptions(format!("invalid project `{project}`")));
    }
    let started_at = graph.now();
    let mut run = Run {
        report: DreamReport::new(project, started_at, opts.dry_run),
        graph,
        opts,
        mutations: 0,
        clock_start: Instant::now(),
    };
    let internal = dream_item(project);

    // 1. Ensure the internal item. Reading the cursor first keeps a corrupt
    //    cursor from causing any mutation; the item either already exists
    //    or has no cursor to corrupt.
    let cursor = load_cursor(run.graph, &internal)?;
    if !opts.dry_run && !run.graph.contains_item(&internal) {
        let meta = Metadata::from([("internal".to_string(), "true".to_string())]);
        run.graph.create_item(&internal, meta)?;
    }
    run.checkpoint(1)?;

    // 2. Load cursor.
    run.report.previous_cursor = cursor;
    run.checkpoint(2)?;

    // 3. Collect events; newest referenced revision per item wins.
    let mut newest: BTreeMap<Kref, u32> = BTreeMap::new();
    for ev in run.graph.read_events(cursor, usize::MAX) {
        let mut counted = false;
        for r in ev.subject.revisions() {
            if r.item.project() != project || r.item == internal {
                continue;
            }
            counted = true;
            let seq = newest.entry(r.item.clone()).or_insert(r.seq);
            *seq = (*seq).max(r.seq);
        }
        if counted {
            run.report.events_processed += 1;
        }
    }
    run.checkpoint(3)?;

    // 4. Fetch revisions: admitted kinds, non-deprecated items.
    let mut inputs = Vec::new();
    for (item, seq) in &newest {
        if opts.kinds.as_ref().is_some_and(|k| !k.contains(item.kind())) {
            continue;
        }
        let Ok(it) = run.graph.item(item) else { continue };
        if it.deprecated {
            continue;
        }
        let rev = run.graph.revision(&RevisionRef::new(item, *seq))?;
        inputs.push(AssessmentInput {
            revision_ref: rev.reference(),
            summary: rev.summary().to_string(),
            metadata: rev.metadata().clone(),
            created_at: rev.created_at(),
            bundle_context: Vec::new(),
        });
    }
    run.checkpoint(4)?;

    // 5. Bundle context.
    for input in &mut inputs {
        input.bundle_context = run.graph.bundles_containing(&input.revision_ref.item);
    }
    run.checkpoint(5)?;

    // 6. Assess in batches.
    let mut assessments: Vec<Assessment> = Vec::new();
    for batch in inputs.chunks(opts.batch_size) {
        match assessor.assess(batch) {
            Ok(out) => {
                let mut by_ref: BTreeMap<RevisionRef, Assessment> = BTreeMap::new();
                for a in out {
                    by_ref.insert(a.revision_ref.clone(), a);
                }
                let complete = by_ref.len() == batch.len()
                    && batch.iter().all(|m| by_ref.contains_key(&m.revision_ref));
                if !complete {
                    for m in batch {
                        run.report.failed.push(ActionRecord {
                            target: m.revision_ref.kref(),
                            detail: "assessor returned a mismatched batch".into(),
                        });
                        run.report.dispositions.push((m.revision_ref.clone(), Disposition::Failed));
                    }
                    continue;
                }
                for m in batch {
                    let a = by_ref.remove(&m.revision_ref).expect("checked above");
                    match a.validate() {
                        Ok(()) => assessments.push(a),
                        Err(e) => {
                            run.report.failed.push(ActionRecord {
                                target: m.revision_ref.kref(),
                                detail: format!("invalid assessment: {e}"),
                            });
                            run.report
                                .dispositions
                                .push((m.revision_ref.clone(), Disposition::Failed));
                        }
                    }
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, size = batch.len(), "assessment batch skipped");
                for m in batch {
                    run.report.failed.push(ActionRecord {
                        target: m.revision_ref.kref(),
                        detail: e.to_string(),
                    });
                    run.report.dispositions.push((m.revision_ref.clone(), Disposition::Failed));
                }
            }
        }
    }
    run.report.memories_assessed = assessments.len();
    run.checkpoint(6)?;

    // 7. Apply under guards.
    apply(&mut run, &assessments)?;
    run.checkpoint(7)?;

    // 8. Persist the cursor on a new internal revision. Its value is the
    //    sequence number of that revision's own creation event, so the next
    //    run starts strictly after everything this run saw or caused.
    if opts.dry_run {
        run.report.new_cursor = cursor.unwrap_or(0).max(run.graph.last_event_seq());
    } else {
        let new_cursor = run.graph.next_event_seq();
        let at = run.graph.now();
        let rev = run.graph.create_revision(
            &internal,
            NewRevision::new(format!("dream state cursor {new_cursor}"))
                .meta(CURSOR_KEY, new_cursor.to_string())
                .meta(CURSOR_TIME_KEY, at.to_rfc3339())
                .author(DREAM_AUTHOR),
        )?;
        run.report.new_cursor = new_cursor;
        run.report.cursor_revision = Some(rev.reference());
    }
    run.checkpoint(8)?;

    // 9. Attach the report.
    run.report.duration_ms = run.clock_start.elapsed().as_millis() as u64;
    if let Some(r) = run.report.cursor_revision.clone() {
        let location = opts
            .report_location
            .as_deref()
            .unwrap_or("dream-report-{cursor}.md")
            .replace("{cursor}", &run.report.new_cursor.to_string());
        run.graph
            .add_artifact(&r, REPORT_ARTIFACT, &location, Some("text/markdown"))?;
        run.report.report_location = Some(location);
    }
    run.checkpoint(9)?;
    if run.report.circuit_breaker_tripped {
        tracing::warn!(
            capped = run.report.capped.len(),
            "deprecation circuit breaker tripped; review the dream report"
        );
    }
    Ok(run.report)
}

/// Continues from the stored cursor. Identical to [`run`]; provided for the
/// interrupted-run workflow.
pub fn resume(
    graph: &mut Graph,
    project: &str,
    assessor: &dyn Assessor,
    opts: &DreamOptions,
) -> Result<DreamReport, DreamError> {
    run(graph, project, assessor, opts)
}

fn item_is_published(graph: &Graph, item: &Kref) -> bool {
    graph.tag_target(item, PUBLISHED_TAG).is_some()
}

fn apply(run: &mut Run<'_>, assessments: &[Assessment]) -> Result<(), DreamError> {
    let opts = run.opts;
    let assessed = assessments.len();
    let mut disposition: BTreeMap<RevisionRef, Disposition> = BTreeMap::new();
    let note = |map: &mut BTreeMap<RevisionRef, Disposition>, r: &RevisionRef, d: Disposition| {
        let rank = |d: Disposition| match d {
            Disposition::Skipped => 0,
            Disposition::Applied => 1,
            Disposition::Capped => 2,
            Disposition::Failed => 3,
        };
        let e = map.entry(r.clone()).or_insert(Disposition::Skipped);
        if rank(d) > rank(*e) {
            *e = d;
        }
    };

    // Deprecation plan: guards first, then the cap in ascending relevance.
    let recommended: Vec<&Assessment> = assessments.iter().filter(|a| a.should_deprecate).collect();
    let cap = opts.deprecation_cap(assessed);
    if assessed > 0 && recommended.len() as f64 / assessed as f64 > opts.max_deprecation_ratio {
        run.report.circuit_breaker_tripped = true;
    }
    let mut eligible: Vec<&Assessment> = Vec::new();
    for a in &recommended {
        let item = &a.revision_ref.item;
        if item_is_published(run.graph, item) {
            if opts.allow_published_deprecation {
                run.report.published_overrides.push(item.clone());
            } else {
                run.report.skipped.push(ActionRecord {
                    target: a.revision_ref.kref(),
                    detail: "deprecation blocked: item is published".into(),
                });
                continue;
            }
        }
        eligible.push(a);
    }
    eligible.sort_by(|a, b| {
        a.relevance_score
            .total_cmp(&b.relevance_score)
            .then_with(|| a.revision_ref.cmp(&b.revision_ref))
    });
    let to_deprecate: BTreeSet<RevisionRef> =
        eligible.iter().take(cap).map(|a| a.revision_ref.clone()).collect();
    for a in eligible.iter().skip(cap) {
        run.report.capped.push(ActionRecord {
            target: a.revision_ref.kref(),
            detail: format!("circuit breaker cap of {cap} reached"),
        });
    }

    for a in assessments {
        let r = &a.revision_ref;
        let item = r.item.clone();
        note(&mut disposition, r, Disposition::Skipped);

        if a.should_deprecate {
            if to_deprecate.contains(r) {
                if run.graph.item(&item).is_ok_and(|i| i.deprecated) {
                    run.report.skipped.push(ActionRecord {
                        target: r.kref(),
                        detail: "already deprecated".into(),
                    });
                } else if opts.dry_run {
                    run.report.deprecated.push(ActionRecord {
                        target: r.kref(),
                        detail: a.deprecation_reason.clone(),
                    });
                    note(&mut disposition, r, Disposition::Applied);
                } else {
                    let at = run.graph.now();
                    match run.graph.set_deprecated(&item, true, at) {
                        Ok(()) => {
                            run.report.deprecated.push(ActionRecord {
                                target: r.kref(),
                                detail: a.deprecation_reason.clone(),
                            });
                            note(&mut disposition, r, Disposition::Applied);
                            run.mutated()?;
                        }
                        Err(e) => {
                            run.report.failed.push(ActionRecord {
                                target: r.kref(),
                                detail: format!("deprecate: {e}"),
                            });
                            note(&mut disposition, r, Disposition::Failed);
                        }
                    }
                }
            } else if eligible.iter().any(|e| &e.revision_ref == r) {
                note(&mut disposition, r, Disposition::Capped);
            }
        }

        let mut added = Vec::new();
        for tag in &a.suggested_tags {
            if RESERVED_TAGS.contains(&tag.as_str()) {
                run.report.skipped.push(ActionRecord {
                    target: r.kref(),
                    detail: format!("tag `{tag}` is reserved"),
                });
                continue;
            }
            if run.graph.tag_target(&item, tag).is_some() {
                continue;
            }
            if opts.dry_run {
                added.push(tag.clone());
                continue;
            }
            let at = run.graph.now();
            match run.graph.bind_tag(&item, tag, r.seq, at) {
                Ok(_) => {
                    added.push(tag.clone());
                    run.mutated().map_err(|e| {
                        flush_tags(&mut run.report, r, &added);
                        e
                    })?;
                }
                Err(e) => {
                    run.report.failed.push(ActionRecord {
                        target: r.kref(),
                        detail: format!("tag `{tag}`: {e}"),
                    });
                    note(&mut disposition, r, Disposition::Failed);
                }
            }
        }
        if !added.is_empty() {
            flush_tags(&mut run.report, r, &added);
            note(&mut disposition, r, Disposition::Applied);
        }

        if !a.metadata_updates.is_empty() {
            match update_metadata(run, r, &a.metadata_updates) {
                Ok(Some(keys)) => {
                    run.report.metadata_updated.push(ActionRecord {
                        target: r.kref(),
                        detail: keys,
                    });
                    note(&mut disposition, r, Disposition::Applied);
                    if !opts.dry_run {
                        run.mutated()?;
                    }
                }
                Ok(None) => {}
                Err(e) => {
                    run.report.failed.push(ActionRecord {
                        target: r.kref(),
                        detail: format!("metadata: {e}"),
                    });
                    note(&mut disposition, r, Disposition::Failed);
                }
            }
        }

        for (target, edge_type) in &a.related_memories {
            let exists = run.graph.revisions_of(&item).is_ok_and(|revs| {
                revs.iter()
                    .any(|rev| run.graph.has_edge(&rev.reference(), *edge_type, target))
            });
            if exists {
                continue;
            }
            let result = if opts.dry_run {
                run.graph.validate_edge(r, *edge_type, target)
            } else {
                run.graph
                    .add_edge(r, *edge_type, target, Metadata::new())
                    .map(|_| ())
            };
            match result {
                Ok(()) => {
                    run.report.relationships_created.push(RelationshipRecord {
                        source: r.clone(),
                        target: target.clone(),
                        edge_type: *edge_type,
                    });
                    note(&mut disposition, r, Disposition::Applied);
                    if !opts.dry_run {
                        run.mutated()?;
                    }
                }
                Err(e) => {
                    run.report.failed.push(ActionRecord {
                        target: r.kref(),
                        detail: format!("relationship {edge_type} -> {target}: {e}"),
                    });
                    note(&mut disposition, r, Disposition::Failed);
                }
            }
        }
        let d = disposition[r];
        run.report.dispositions.push((r.clone(), d));
    }
    Ok(())
}

fn flush_tags(report: &mut DreamReport, r: &RevisionRef, added: &[String]) {
    report.tags_added.push(ActionRecord {
        target: r.kref(),
        detail: added.join(", "),
    });
}

/// Writes metadata updates as a new revision carrying the current content.
/// Returns the updated keys, or `None` when the current revision already
/// holds every update.
fn update_metadata(
    run: &mut Run<'_>,
    r: &RevisionRef,
    updates: &BTreeMap<String, String>,
) -> Result<Option<String>, StoreError> {
    let base_ref = run.graph.tag_target(&r.item, LATEST_TAG).unwrap_or_else(|| r.clone());
    let base = run.graph.revision(&base_ref)?;
    let pending: Vec<&String> = updates
        .iter()
        .filter(|(k, v)| base.metadata().get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    if pending.is_empty() {
        return Ok(None);
    }
    let keys = pending.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ");
    if run.opts.dry_run {
        return Ok(Some(keys));
    }
    let mut metadata = base.metadata().clone();
    metadata.extend(updates.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut new = NewRevision::new(base.summary())
        .content(base.content().iter().cloned())
        .metadata(metadata)
        .author(DREAM_AUTHOR);
    if let Some(t) = base.embedding_text_override() {
        new = new.embedding_text(t);
    }
    let item = r.item.clone();
    run.graph.create_revision(&item, new)?;
    Ok(Some(keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::logical;

    #[derive(Debug)]
    struct DeprecateAll;

    impl Assessor for DeprecateAll {
        fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
            Ok(batch
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let mut a = Assessment::keep(&m.revision_ref, i as f64 / 100.0);
                    a.should_deprecate = true;
                    a.deprecation_reason = "stale".into();
                    a
                })
                .collect())
        }
    }

    #[derive(Debug)]
    struct Broken;

    impl Assessor for Broken {
        fn assess(&self, _: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
            Err(AssessorError("offline".into()))
        }
    }

    fn memories(n: usize) -> Graph {
        let mut g = Graph::new(logical());
        for i in 0..n {
            let k = Kref::parse(&format!("kref://p/chat/m{i:02}.conversation")).unwrap();
            g.create_item(&k, Metadata::new()).unwrap();
            g.create_revision(&k, NewRevision::new(format!("memory number {i}"))).unwrap();
        }
        g
    }

    #[test]
    fn options_are_validated() {
        let mut g = memories(1);
        for (ratio, batch) in [(0.05, 20), (0.95, 20), (0.5, 0)] {
            let opts = DreamOptions {
                max_deprecation_ratio: ratio,
                batch_size: batch,
                ..Default::default()
            };
            assert!(matches!(
                run(&mut g, "p", &RuleAssessor, &opts),
                Err(DreamError::InvalidOptions(_))
            ));
        }
        assert_eq!(DreamOptions::default().deprecation_cap(20), 10);
        let o = DreamOptions {
            max_deprecation_ratio: 0.3,
            ..Default::default()
        };
        assert_eq!(o.deprecation_cap(10), 3);
    }

    #[test]
    fn conservative_run_changes_nothing_but_the_cursor() {
        let mut g = memories(3);
        let rep = run(&mut g, "p", &RuleAssessor, &DreamOptions::default()).unwrap();
        assert_eq!(rep.events_processed, 3);
        assert_eq!(rep.memories_assessed, 3);
        assert!(rep.deprecated.is_empty() && rep.tags_added.is_empty());
        assert!(!rep.circuit_breaker_tripped);
        assert_eq!(stored_cursor(&g, "p").unwrap(), Some(rep.new_cursor));
        let again = resume(&mut g, "p", &RuleAssessor, &DreamOptions::default()).unwrap();
        assert_eq!(again.events_processed, 0);
        assert!(again.new_cursor > rep.new_cursor);
    }

    #[test]
    fn breaker_caps_at_floor_of_ratio() {
        let mut g = memories(20);
        let rep = run(&mut g, "p", &DeprecateAll, &DreamOptions::default()).unwrap();
        assert!(rep.circuit_breaker_tripped);
        assert_eq!(rep.deprecated.len(), 10);
        assert_eq!(rep.capped.len(), 10);
        // Lowest relevance goes first.
        assert!(rep.deprecated[0].target.to_string().contains("m00"));
        let deprecated = g.items().filter(|i| i.deprecated).count();
        assert_eq!(deprecated, 10);
    }

    #[test]
    fn published_items_are_protected_unless_overridden() {
        let mut g = memories(4);
        let k = Kref::parse("kref://p/chat/m00.conversation").unwrap();
        let now = g.now();
        g.bind_tag(&k, PUBLISHED_TAG, 1, now).unwrap();
        let opts = DreamOptions {
            max_deprecation_ratio: 0.9,
            ..Default::default()
        };
        run(&mut g, "p", &DeprecateAll, &opts).unwrap();
        assert!(!g.item(&k).unwrap().deprecated);

        let mut g = memories(4);
        let now = g.now();
        g.bind_tag(&k, PUBLISHED_TAG, 1, now).unwrap();
        let opts = DreamOptions {
            allow_published_deprecation: true,
            ..opts
        };
        let rep = run(&mut g, "p", &DeprecateAll, &opts).unwrap();
        assert!(g.item(&k).unwrap().deprecated);
        assert_eq!(rep.published_overrides, vec![k]);
        assert!(rep.markdown().contains("published"));
    }

    #[test]
    fn dry_run_is_pure() {
        let mut g = memories(6);
        let before = g.to_snapshot_bytes().unwrap();
        let opts = DreamOptions {
            dry_run: true,
            ..Default::default()
        };
        let rep = run(&mut g, "p", &DeprecateAll, &opts).unwrap();
        assert_eq!(rep.deprecated.len(), 3);
        assert_eq!(g.to_snapshot_bytes().unwrap(), before);
        assert!(rep.cursor_revision.is_none());
    }

    #[test]
    fn assessor_failure_is_isolated() {
        let mut g = memories(3);
        let rep = run(&mut g, "p", &Broken, &DreamOptions::default()).unwrap();
        assert_eq!(rep.failed.len(), 3);
        assert_eq!(rep.memories_assessed, 0);
        assert!(rep.cursor_revision.is_some());
    }

    #[test]
    fn corrupt_cursor_aborts_without_mutation() {
        let mut g = memories(2);
        let internal = dream_item("p");
        g.create_item(&internal, Metadata::new()).unwrap();
        g.create_revision(&internal, NewRevision::new("bad").meta(CURSOR_KEY, "x1"))
            .unwrap();
        let before = g.to_snapshot_bytes().unwrap();
        assert!(matches!(
            run(&mut g, "p", &DeprecateAll, &DreamOptions::default()),
            Err(DreamError::CursorCorrupt { .. })
        ));
        assert_eq!(g.to_snapshot_bytes().unwrap(), before);
    }

    #[test]
    fn non_conversation_kinds_are_filtered() {
        let mut g = memories(2);
        let k = Kref::parse("kref://p/work/plan.decision").unwrap();
        g.create_item(&k, Metadata::new()).unwrap();
        g.create_revision(&k, NewRevision::new("plan")).unwrap();
        let rep = run(&mut g, "p", &RuleAssessor, &DreamOptions::default()).unwrap();
        assert_eq!(rep.memories_assessed, 2);
        let all = DreamOptions {
            kinds: None,
            ..Default::default()
        };
        let mut g2 = memories(2);
        g2.create_item(&k, Metadata::new()).unwrap();
        g2.create_revision(&k, NewRevision::new("plan")).unwrap();
        assert_eq!(run(&mut g2, "p", &RuleAssessor, &all).unwrap().memories_assessed, 3);
    }

    #[test]
    fn interrupted_run_resumes_without_duplicates() {
        let mut g = memories(20);
        let opts = DreamOptions {
            interrupt: Some(Interrupt::AfterMutations(4)),
            ..Default::default()
        };
        let err = run(&mut g, "p", &DeprecateAll, &opts).unwrap_err();
        assert!(matches!(err, DreamError::Interrupted { stage: 7, .. }));
        assert_eq!(g.items().filter(|i| i.deprecated).count(), 4);
        let rep = resume(&mut g, "p", &DeprecateAll, &DreamOptions::default()).unwrap();
        let events = g
            .events()
            .iter()
            .filter(|e| e.kind == crate::store::EventKind::RevisionDeprecated)
            .count();
        assert_eq!(events, 4 + rep.deprecated.len());
    }
}
