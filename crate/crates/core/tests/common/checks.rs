//! One function per acceptance criterion. Each returns a short summary of
//! what was measured, or the first violation found.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cogmem_core::agm_suite::{self, Category, Cell, Postulate};
use cogmem_core::belief::{self, belief_base, contract, expand, revise};
use cogmem_core::dream::{
    self, Assessment, AssessmentInput, Assessor, AssessorError, DreamError, DreamOptions,
    DreamReport, Interrupt, RuleAssessor,
};
use cogmem_core::engine::{Engine, IngestRequest};
use cogmem_core::retrieval::{
    cosine, EmbeddingProvider, HashedEmbedder, SearchIndex, SearchOptions,
};
use cogmem_core::store::{
    BeliefAtom, Content, EdgeType, EventKind, EventSubject, Metadata, NewRevision, LATEST_TAG,
    PUBLISHED_TAG,
};
use cogmem_core::traversal::{analyze_impact, traverse, Direction, TraverseOptions};
use cogmem_core::{Graph, Kref, RevisionRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{add_corpus, graph, kref_text, levenshtein, query, Bm25Oracle, MALFORMED};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn k(s: &str) -> Kref {
    Kref::parse(s).unwrap()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---- AGM ---------------------------------------------------------------

pub fn agm_compliance() -> Outcome {
    let report = agm_suite::run_all();
    ensure!(report.total == 49, "{} scenarios, expected 49", report.total);
    ensure!(
        report.passed == 49 && report.failed == 0,
        "{} passed, {} failed: {:?}",
        report.passed,
        report.failed,
        report.results.iter().filter(|r| !r.passed).map(|r| &r.id).collect::<Vec<_>>()
    );
    let mut na = Vec::new();
    for p in Postulate::ALL {
        for c in Category::ALL {
            match report.cell(p, c) {
                Cell::NotApplicable => na.push((p, c)),
                Cell::Pass => {}
                other => return Err(format!("cell {}x{} is {other:?}", p.as_str(), c.as_str())),
            }
        }
    }
    let want = vec![
        (Postulate::K6, Category::Chain),
        (Postulate::CoreRetainment, Category::Temporal),
    ];
    ensure!(na == want, "n/a cells {na:?}");
    ensure!(report.duration_ms < 10_000, "took {} ms", report.duration_ms);
    Ok(format!("49/49 passed, n/a K6xchain and CoreRetainmentxtemporal, {} ms", report.duration_ms))
}

// ---- worked example ----------------------------------------------------

pub fn worked_example() -> Outcome {
    let (mut g, _) = graph();
    let color = k("kref://design/prefs/color-pref.decision");
    let palette = k("kref://design/prefs/palette.decision");
    let warm = BeliefAtom::summary(&color, "warm tones");
    let earth = BeliefAtom::summary(&palette, "earth-tone palette");
    let cool = BeliefAtom::summary(&color, "cool tones");

    for (item, atom) in [(&color, &warm), (&palette, &earth)] {
        g.create_item(item, Metadata::new()).map_err(e)?;
        g.create_revision(item, NewRevision::new(atom.value.clone()).content([atom.clone()]))
            .map_err(e)?;
    }
    let r11 = RevisionRef::new(&color, 1);
    let r21 = RevisionRef::new(&palette, 1);
    g.add_edge(&r21, EdgeType::DependsOn, &r11, Metadata::new()).map_err(e)?;

    let before = belief_base(&g, None);
    ensure!(
        before.atoms == Content::from([warm.clone(), earth.clone()]),
        "initial base {:?}",
        before.atoms
    );
    let t_before = g.now();

    let r12 = revise(&mut g, &color, NewRevision::new("cool tones").content([cool.clone()])).map_err(e)?;
    ensure!(r12 == RevisionRef::new(&color, 2), "revision is {r12}");
    let after = belief_base(&g, None);
    ensure!(
        after.atoms == Content::from([cool.clone(), earth.clone()]),
        "revised base {:?}",
        after.atoms
    );
    ensure!(g.has_edge(&r12, EdgeType::Supersedes, &r11), "SUPERSEDES edge missing");
    ensure!(g.tag_target(&color, LATEST_TAG) == Some(r12.clone()), "latest not re-pointed");

    let impact = analyze_impact(&g, &r12, 2).map_err(e)?.revisions();
    ensure!(impact == BTreeSet::from([r21.clone()]), "impact {impact:?}");

    let then = g.resolve(&color, Some(t_before), false).map_err(e)?;
    ensure!(then.summary() == "warm tones", "historical resolve gave {:?}", then.summary());
    ensure!(belief_base(&g, Some(t_before)).atoms == before.atoms, "historical base changed");
    let now = g.resolve(&color, None, false).map_err(e)?;
    ensure!(now.summary() == "cool tones", "current resolve gave {:?}", now.summary());

    let at = g.now();
    belief::rollback(&mut g, &color, LATEST_TAG, 1, at).map_err(e)?;
    ensure!(belief_base(&g, None).atoms == before.atoms, "rollback did not restore the initial base");
    Ok("{warm}->{cool}, SUPERSEDES present, impact(r1^2,2)={palette r1}, past resolve = warm tones".into())
}

// ---- lifecycle ---------------------------------------------------------

fn color_request(summary: &str, tags: &[&str]) -> IngestRequest {
    IngestRequest {
        project: "CognitiveMemory".into(),
        space: vec!["user".into()],
        title: "favorite color".into(),
        kind: "conversation".into(),
        summary: summary.into(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
        metadata: Metadata::from([("type".to_string(), "fact".to_string())]),
        ..IngestRequest::default()
    }
}

/// Scores every revision in `g` for `query` from first principles: oracle
/// BM25, cosine in f64, type weight from a name-token comparison.
fn brute_force_scores(g: &Graph, query: &str) -> Vec<(Kref, f64)> {
    let revs: Vec<_> = g.all_revisions().collect();
    let texts: Vec<String> = revs.iter().map(|r| r.search_text().to_string()).collect();
    let oracle = Bm25Oracle::new(&texts);
    let embedder = HashedEmbedder::default();
    let q: Vec<f64> = embedder.embed(query).into_iter().map(f64::from).collect();
    let q_terms: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
    let mut out = Vec::new();
    for (i, rev) in revs.iter().enumerate() {
        if g.tags_on(&rev.reference()).is_empty() || g.item(rev.item()).unwrap().deprecated {
            continue;
        }
        let bm25 = oracle.score(query, i);
        let d: Vec<f64> = rev.embedding().unwrap().iter().map(|x| f64::from(*x)).collect();
        let dot: f64 = q.iter().zip(&d).map(|(a, b)| a * b).sum();
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt() * d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = if norm == 0.0 { 0.0 } else { dot / norm };
        let vector = if cos > 0.0 { 0.85 * cos } else { 0.0 };
        if bm25 == 0.0 && vector == 0.0 {
            continue;
        }
        let name: Vec<String> = rev.item().item_name().split('-').map(str::to_string).collect();
        let on_name = bm25 > 0.0
            && q_terms.iter().any(|t| {
                name.iter().any(|n| n == t || (t.chars().count() > 2 && levenshtein(t, n) <= 1))
            });
        let w = if on_name { 1.0 } else { 0.9 };
        out.push((rev.kref(), w * bm25.max(vector)));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn lifecycle() -> Outcome {
    let (g, _) = graph();
    let engine = Engine::new(g, Some(Arc::new(HashedEmbedder::default())));
    let first = engine
        .ingest(&color_request("User's favorite color is blue", &["initial"]))
        .map_err(e)?;
    let second = engine
        .ingest(&color_request("User's favorite color is black (previously blue)", &[]))
        .map_err(e)?;
    let item = k("kref://CognitiveMemory/user/favorite-color.conversation");
    ensure!(first.item == item && !first.revised, "first ingest {first:?}");
    ensure!(second.item == item && second.revised, "second ingest {second:?}");
    let (r1, r2) = (first.revision, second.revision);
    engine.flush();
    {
        let g = engine.graph();
        ensure!(g.tag_target(&item, LATEST_TAG) == Some(r2.clone()), "latest not re-bound");
        let latest_history: Vec<_> = g
            .tag_history()
            .iter()
            .filter(|h| h.tag == LATEST_TAG && h.item == item)
            .collect();
        ensure!(
            latest_history.len() == 2 && !latest_history[0].is_open() && latest_history[1].is_open(),
            "latest history {latest_history:?}"
        );
        ensure!(g.has_edge(&r2, EdgeType::Supersedes, &r1), "SUPERSEDES edge missing");
    }

    let hits = engine.recall("favorite color", &SearchOptions::top(10)).map_err(e)?;
    let got: BTreeSet<Kref> = hits.iter().map(|h| h.target.clone()).collect();
    ensure!(got == BTreeSet::from([r1.kref(), r2.kref()]), "recall returned {got:?}");

    let blue = engine.recall("blue", &SearchOptions::top(10)).map_err(e)?;
    let order: Vec<Kref> = blue.iter().map(|h| h.target.clone()).collect();
    ensure!(order == vec![r1.kref(), r2.kref()], "order for \"blue\" is {order:?}");

    let g = engine.into_graph();
    let mut index = SearchIndex::new().with_provider(Arc::new(HashedEmbedder::default()));
    index.sync(&g);
    for q in ["blue", "favorite color", "black"] {
        let hits = index.search(&g, q, &SearchOptions::top(10)).map_err(e)?;
        let brute = brute_force_scores(&g, q);
        let ours: Vec<&Kref> = hits.iter().map(|h| &h.target).collect();
        let theirs: Vec<&Kref> = brute.iter().map(|b| &b.0).collect();
        ensure!(ours == theirs, "{q:?}: order {ours:?} vs brute force {theirs:?}");
        for (h, (_, want)) in hits.iter().zip(&brute) {
            let r = RevisionRef::from_kref(&h.target).unwrap();
            let ft = index.fulltext_score(q, &r);
            let v = index.vector_score(q, &r).filter(|v| *v > 0.0).unwrap_or(0.0);
            let recomputed = h.match_type.weight() * ft.max(v);
            ensure!(
                h.score.to_bits() == recomputed.to_bits(),
                "{q:?} {}: score {} vs w*max {}",
                h.target,
                h.score,
                recomputed
            );
            ensure!((h.score - want).abs() < 1e-6, "{q:?} {}: {} vs brute {want}", h.target, h.score);
        }
    }
    let blue = index.search(&g, "blue", &SearchOptions::top(2)).map_err(e)?;
    Ok(format!(
        "latest re-bound, SUPERSEDES present, recall returns r1+r2, \"blue\": r1 {:.4} > r2 {:.4}",
        blue[0].score, blue[1].score
    ))
}

// ---- dream guards ------------------------------------------------------

#[derive(Debug)]
struct DeprecateAll;

impl Assessor for DeprecateAll {
    fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut a = Assessment::keep(&m.revision_ref, (i % 10) as f64 / 10.0);
                a.should_deprecate = true;
                a.deprecation_reason = "adversarial".into();
                a
            })
            .collect())
    }
}

#[derive(Debug)]
struct Coin(u64);

impl Assessor for Coin {
    fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        Ok(batch
            .iter()
            .map(|m| {
                let mut a = Assessment::keep(&m.revision_ref, rng.gen_range(0.0..1.0));
                a.should_deprecate = rng.gen_bool(0.5);
                if a.should_deprecate {
                    a.deprecation_reason = "coin".into();
                }
                a
            })
            .collect())
    }
}

fn memories(n: usize) -> (Graph, Vec<Kref>) {
    let (mut g, _) = graph();
    let items = (0..n)
        .map(|i| {
            let item = k(&format!("kref://acc/chat/m{i:02}.conversation"));
            g.create_item(&item, Metadata::new()).unwrap();
            g.create_revision(&item, NewRevision::new(format!("memory number {i}"))).unwrap();
            item
        })
        .collect();
    (g, items)
}

fn deprecated(g: &Graph) -> usize {
    g.items().filter(|i| i.deprecated).count()
}

pub fn guards() -> Outcome {
    // Breaker: 20 memories, every one flagged, ratio 0.5.
    let (mut g, _) = memories(20);
    let report = dream::run(&mut g, "acc", &DeprecateAll, &DreamOptions::default()).map_err(e)?;
    ensure!(report.deprecated.len() == 10, "{} deprecations applied", report.deprecated.len());
    ensure!(deprecated(&g) == 10, "{} items deprecated", deprecated(&g));
    ensure!(report.circuit_breaker_tripped, "breaker flag not set");
    ensure!(report.capped.len() == 10, "{} capped", report.capped.len());

    // Published protection against several assessors, then the override.
    let assessors: Vec<Box<dyn Assessor>> = vec![
        Box::new(DeprecateAll),
        Box::new(RuleAssessor),
        Box::new(Coin(1)),
        Box::new(Coin(2)),
        Box::new(Coin(3)),
    ];
    for a in &assessors {
        let (mut g, items) = memories(20);
        let published: Vec<&Kref> = items.iter().step_by(3).collect();
        for item in &published {
            let now = g.now();
            g.bind_tag(item, PUBLISHED_TAG, 1, now).map_err(e)?;
        }
        let opts = DreamOptions {
            max_deprecation_ratio: 0.9,
            ..DreamOptions::default()
        };
        dream::run(&mut g, "acc", a.as_ref(), &opts).map_err(e)?;
        for item in &published {
            ensure!(!g.item(item).map_err(e)?.deprecated, "{a:?} deprecated published {item}");
        }
    }
    let (mut g, items) = memories(20);
    let now = g.now();
    g.bind_tag(&items[0], PUBLISHED_TAG, 1, now).map_err(e)?;
    let opts = DreamOptions {
        max_deprecation_ratio: 0.9,
        allow_published_deprecation: true,
        ..DreamOptions::default()
    };
    let report = dream::run(&mut g, "acc", &DeprecateAll, &opts).map_err(e)?;
    ensure!(
        report.published_overrides == vec![items[0].clone()],
        "override not recorded: {:?}",
        report.published_overrides
    );

    // Dry run leaves the snapshot bytes untouched.
    let (mut g, _) = memories(20);
    dream::run(&mut g, "acc", &RuleAssessor, &DreamOptions::default()).map_err(e)?;
    for i in 0..10 {
        let item = k(&format!("kref://acc/chat/m{i:02}.conversation"));
        g.create_revision(&item, NewRevision::new(format!("memory number {i}, revisited")))
            .map_err(e)?;
    }
    let before = g.to_snapshot_bytes().map_err(e)?;
    let opts = DreamOptions {
        dry_run: true,
        ..DreamOptions::default()
    };
    let report = dream::run(&mut g, "acc", &DeprecateAll, &opts).map_err(e)?;
    ensure!(!report.deprecated.is_empty(), "dry run planned nothing");
    ensure!(g.to_snapshot_bytes().map_err(e)? == before, "dry run changed the snapshot");
    Ok(format!(
        "20 flagged -> 10 applied, breaker set; published kept under {} assessors; dry run byte-identical ({} bytes)",
        assessors.len(),
        before.len()
    ))
}

// ---- cursor exactly-once -----------------------------------------------

/// Proposes every kind of action for every memory, deterministically per
/// item, so that any re-application would be visible.
#[derive(Debug)]
struct Eager {
    anchor: RevisionRef,
}

impl Assessor for Eager {
    fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
        Ok(batch
            .iter()
            .map(|m| {
                let r = &m.revision_ref;
                let h: u64 = r.item.item_name().bytes().map(u64::from).sum();
                let mut a = Assessment::keep(r, (h % 100) as f64 / 100.0);
                if h % 3 == 0 {
                    a.should_deprecate = true;
                    a.deprecation_reason = "stale".into();
                }
                a.suggested_tags = vec!["reviewed".into()];
                a.metadata_updates = BTreeMap::from([("reviewed".into(), "yes".into())]);
                a.related_memories = vec![(self.anchor.clone(), EdgeType::Referenced)];
                a
            })
            .collect())
    }
}

fn applied_keys(report: &DreamReport) -> Vec<String> {
    let mut keys = Vec::new();
    keys.extend(report.deprecated.iter().map(|a| format!("deprecate {} {}", a.target, a.detail)));
    keys.extend(report.metadata_updated.iter().map(|a| format!("metadata {} {}", a.target, a.detail)));
    keys.extend(report.tags_added.iter().map(|a| format!("tags {} {}", a.target, a.detail)));
    keys.extend(
        report
            .relationships_created
            .iter()
            .map(|r| format!("edge {} {} {}", r.source.item, r.edge_type, r.target)),
    );
    keys
}

fn one_schedule(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut g, _) = graph();
    let anchor_item = k("kref://acc/ref/anchor.fact");
    g.create_item(&anchor_item, Metadata::new()).map_err(e)?;
    let anchor = g.create_revision(&anchor_item, NewRevision::new("anchor")).map_err(e)?.reference();
    let assessor = Eager { anchor: anchor.clone() };
    let mut items: Vec<Kref> = Vec::new();
    let mut applied: HashMap<String, usize> = HashMap::new();
    let mut interruptions = 0;

    for _round in 0..rng.gen_range(2..=5) {
        for _ in 0..rng.gen_range(1..=4) {
            let live: Vec<&Kref> = items.iter().filter(|i| !g.item(i).unwrap().deprecated).collect();
            if live.is_empty() || rng.gen_bool(0.6) {
                let item = k(&format!("kref://acc/chat/m{:03}.conversation", items.len()));
                g.create_item(&item, Metadata::new()).map_err(e)?;
                g.create_revision(&item, NewRevision::new(format!("memory {}", items.len())))
                    .map_err(e)?;
                items.push(item);
            } else {
                let item = (*live.choose(&mut rng).unwrap()).clone();
                g.create_revision(&item, NewRevision::new(format!("update {}", rng.gen::<u16>())))
                    .map_err(e)?;
            }
        }
        let mut attempts = 0;
        loop {
            attempts += 1;
            ensure!(attempts < 100, "seed {seed}: dream never completed");
            let interrupt = match rng.gen_range(0..3) {
                0 => None,
                1 => Some(Interrupt::AfterStage(rng.gen_range(1..=9))),
                _ => Some(Interrupt::AfterMutations(rng.gen_range(1..=6))),
            };
            let opts = DreamOptions {
                interrupt,
                ..DreamOptions::default()
            };
            let (report, done) = match dream::resume(&mut g, "acc", &assessor, &opts) {
                Ok(r) => (r, true),
                Err(DreamError::Interrupted { report, .. }) => {
                    interruptions += 1;
                    (*report, false)
                }
                Err(other) => return Err(format!("seed {seed}: {other}")),
            };
            for key in applied_keys(&report) {
                let n = applied.entry(key.clone()).or_default();
                *n += 1;
                ensure!(*n == 1, "seed {seed}: applied twice: {key}");
            }
            if done {
                break;
            }
        }
    }

    // The graph agrees: one edge per (item, type, target), one dream
    // revision per user revision, one deprecation and one tag per item.
    let mut edges: HashMap<(Kref, EdgeType, RevisionRef), usize> = HashMap::new();
    for edge in g.edges() {
        *edges.entry((edge.source.item.clone(), edge.edge_type, edge.target.clone())).or_default() += 1;
    }
    ensure!(edges.values().all(|n| *n == 1), "seed {seed}: duplicate edge");
    let mut deprecations: HashMap<&Kref, usize> = HashMap::new();
    for ev in g.events() {
        if let (EventKind::RevisionDeprecated, EventSubject::Revision(r)) = (ev.kind, &ev.subject) {
            *deprecations.entry(&r.item).or_default() += 1;
        }
    }
    ensure!(deprecations.values().all(|n| *n == 1), "seed {seed}: item deprecated twice");
    for item in &items {
        let revs = g.revisions_of(item).map_err(e)?;
        for pair in revs.windows(2) {
            ensure!(
                !(pair[0].author() == "dream-state" && pair[1].author() == "dream-state"),
                "seed {seed}: back-to-back metadata revisions on {item}"
            );
        }
        let tags = g.tag_history().iter().filter(|h| &h.item == item && h.tag == "reviewed").count();
        ensure!(tags <= 1, "seed {seed}: `reviewed` bound {tags} times on {item}");
        if !g.item(item).map_err(e)?.deprecated {
            ensure!(tags == 1, "seed {seed}: {item} was never tagged");
            let linked = revs
                .iter()
                .any(|r| g.has_edge(&r.reference(), EdgeType::Referenced, &anchor));
            ensure!(linked, "seed {seed}: {item} never linked");
        }
    }
    Ok(interruptions)
}

pub fn cursor_exactly_once() -> Outcome {
    let mut interruptions = 0;
    for seed in 0..100 {
        interruptions += one_schedule(seed)?;
    }
    Ok(format!("100 schedules, {interruptions} interruptions, 0 duplicates"))
}

// ---- retrieval properties ----------------------------------------------

fn hybrid(g: &Graph) -> SearchIndex {
    let mut idx = SearchIndex::new().with_provider(Arc::new(HashedEmbedder::default()));
    idx.sync(g);
    idx
}

fn targets(idx: &SearchIndex, g: &Graph, q: &str, opts: &SearchOptions) -> BTreeSet<Kref> {
    idx.candidates(g, q, opts).into_iter().map(|c| c.target).collect()
}

pub const QUERIES: usize = 1000;

/// Hybrid candidates include every fulltext candidate and every visible
/// revision with positive cosine.
pub fn branch_superset(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut g, _) = graph();
    add_corpus(&mut g, &mut rng, "d", 50);
    let idx = hybrid(&g);
    let fulltext_only = SearchIndex::build(&g);
    let embedder = HashedEmbedder::default();
    let opts = SearchOptions::default();
    let visible: Vec<RevisionRef> = g.items().filter_map(|i| g.tag_target(&i.kref, LATEST_TAG)).collect();
    for _ in 0..QUERIES {
        let q = query(&mut rng);
        let all = targets(&idx, &g, &q, &opts);
        let ft = targets(&fulltext_only, &g, &q, &opts);
        ensure!(ft.is_subset(&all), "{q:?}: fulltext candidates missing from hybrid");
        let qv = embedder.embed(&q);
        for r in &visible {
            let emb = g.revision(r).map_err(e)?.embedding().unwrap();
            ensure!(
                cosine(&qv, emb) <= 0.0 || all.contains(&r.kref()),
                "{q:?}: vector candidate {r} missing from hybrid"
            );
        }
    }
    Ok(format!("{QUERIES} queries"))
}

pub fn monotone_under_growth(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut g, _) = graph();
    add_corpus(&mut g, &mut rng, "d", 50);
    let queries: Vec<String> = (0..QUERIES).map(|_| query(&mut rng)).collect();
    let opts = SearchOptions::default();
    let idx = hybrid(&g);
    let before: Vec<_> = queries.iter().map(|q| targets(&idx, &g, q, &opts)).collect();
    add_corpus(&mut g, &mut rng, "e", 50);
    let idx = hybrid(&g);
    for (q, old) in queries.iter().zip(before) {
        let new = targets(&idx, &g, q, &opts);
        ensure!(old.is_subset(&new), "{q:?}: lost {:?}", old.difference(&new).collect::<Vec<_>>());
    }
    Ok(format!("{QUERIES} queries, 50 -> 100 docs"))
}

pub fn bm25_oracle(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut g, _) = graph();
    add_corpus(&mut g, &mut rng, "d", 50);
    let idx = SearchIndex::build(&g);
    let revs: Vec<RevisionRef> = g.all_revisions().map(|r| r.reference()).collect();
    let texts: Vec<String> = g.all_revisions().map(|r| r.search_text().to_string()).collect();
    let oracle = Bm25Oracle::new(&texts);
    let mut worst = 0.0f64;
    for _ in 0..QUERIES {
        let q = query(&mut rng);
        for (i, r) in revs.iter().enumerate() {
            let diff = (idx.fulltext_score(&q, r) - oracle.score(&q, i)).abs();
            worst = worst.max(diff);
            ensure!(diff < 1e-9, "{q:?} on {r}: off by {diff}");
        }
    }
    Ok(format!("{QUERIES} queries x {} docs, max |diff| {worst:.1e}", revs.len()))
}

pub fn deprecation_exclusion(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut g, _) = graph();
    let items = add_corpus(&mut g, &mut rng, "d", 50);
    let gone: BTreeSet<Kref> = items.iter().step_by(4).cloned().collect();
    for item in &gone {
        let now = g.now();
        g.set_deprecated(item, true, now).map_err(e)?;
    }
    let idx = hybrid(&g);
    for _ in 0..QUERIES {
        let q = query(&mut rng);
        for c in idx.candidates(&g, &q, &SearchOptions::default()) {
            ensure!(!gone.contains(&c.target.item_ref()), "{q:?} surfaced deprecated {}", c.target);
        }
    }
    Ok(format!("{QUERIES} queries, {} deprecated items never surfaced", gone.len()))
}

pub fn retrieval_properties() -> Outcome {
    let a = branch_superset(101)?;
    let b = monotone_under_growth(102)?;
    let c = bm25_oracle(103)?;
    let d = deprecation_exclusion(104)?;
    Ok(format!("(a) {a}; (b) {b}; (c) {c}; (d) {d}"))
}

// ---- kref --------------------------------------------------------------

pub fn kref_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10_000 {
        let (canon, alt) = kref_text(&mut rng);
        let parsed = Kref::parse(&canon).map_err(|err| format!("{canon}: {err}"))?;
        ensure!(parsed.to_string() == canon, "{canon} formats as {parsed}");
        let again = Kref::parse(&alt).map_err(|err| format!("{alt}: {err}"))?;
        ensure!(again == parsed, "{alt} parses differently from {canon}");
    }
    for bad in MALFORMED {
        ensure!(Kref::parse(bad).is_err(), "accepted malformed {bad:?}");
    }
    Ok(format!("10000 URIs round-trip, {} malformed classes rejected", MALFORMED.len()))
}

// ---- recovery ----------------------------------------------------------

pub fn recovery_rejection() -> Outcome {
    let (mut g, _) = graph();
    let item = k("kref://acc/beliefs/abc.fact");
    let [a, b, c] = ["A", "B", "C"].map(|v| BeliefAtom::summary(&item, v));
    g.create_item(&item, Metadata::new()).map_err(e)?;
    g.create_revision(&item, NewRevision::new("A; B; C").content([a.clone(), b.clone(), c.clone()]))
        .map_err(e)?;
    let at = g.now();
    contract(&mut g, &a, at).map_err(e)?;
    expand(&mut g, &item, a.clone()).map_err(e)?;
    let base = belief_base(&g, None);
    ensure!(base.contains(&a), "A missing after re-expansion");
    ensure!(!base.contains(&b) && !base.contains(&c), "recovery happened: {:?}", base.atoms);
    let at = g.now();
    belief::rollback(&mut g, &item, LATEST_TAG, 1, at).map_err(e)?;
    let base = belief_base(&g, None);
    ensure!(
        base.atoms == Content::from([a, b, c]),
        "rollback restored {:?}",
        base.atoms
    );
    Ok("contract(A)+expand(A) = {A}; rollback restores {A,B,C}".into())
}

// ---- scale -------------------------------------------------------------

fn percentile(mut xs: Vec<Duration>, p: f64) -> Duration {
    xs.sort();
    let i = ((xs.len() as f64 * p).ceil() as usize).clamp(1, xs.len()) - 1;
    xs[i]
}

pub struct ScaleNumbers {
    pub revisions: usize,
    pub build: Duration,
    pub search_p50: Duration,
    pub search_p95: Duration,
    pub traversal_p95: Duration,
    pub traversal_max: Duration,
    pub largest_traversal: usize,
}

pub fn scale(revisions: usize) -> Result<ScaleNumbers, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let started = Instant::now();
    let (mut g, _) = graph();
    let embedder = HashedEmbedder::default();
    let mut refs: Vec<RevisionRef> = Vec::with_capacity(revisions);
    let mut item_no = 0;
    while refs.len() < revisions {
        let item = k(&format!("kref://scale/mem/s{}/m{item_no}.conversation", item_no % 100));
        item_no += 1;
        g.create_item(&item, Metadata::new()).map_err(e)?;
        for _ in 0..rng.gen_range(1..=3).min(revisions - refs.len()) {
            let rev = g
                .create_revision(&item, NewRevision::new(super::words(&mut rng, 4, 12)))
                .map_err(e)?;
            let (r, text) = (rev.reference(), rev.search_text().to_string());
            g.set_embedding(&r, embedder.embed(&text)).map_err(e)?;
            if refs.len() > 10 {
                for _ in 0..rng.gen_range(0..=3) {
                    let target = refs[rng.gen_range(0..refs.len())].clone();
                    if target.item != r.item && !g.has_edge(&r, EdgeType::DependsOn, &target) {
                        g.add_edge(&r, EdgeType::DependsOn, &target, Metadata::new()).map_err(e)?;
                    }
                }
            }
            refs.push(r);
        }
    }
    let index = hybrid(&g);
    let build = started.elapsed();

    let mut search = Vec::new();
    for _ in 0..200 {
        let q = query(&mut rng);
        let t = Instant::now();
        index.search(&g, &q, &SearchOptions::top(10)).map_err(e)?;
        search.push(t.elapsed());
    }
    let mut walks = Vec::new();
    let mut largest = 0;
    for _ in 0..200 {
        let origin = refs.choose(&mut rng).unwrap();
        let t = Instant::now();
        let res = traverse(&g, origin, &TraverseOptions::new(Direction::Outgoing, 10)).map_err(e)?;
        walks.push(t.elapsed());
        largest = largest.max(res.visited.len());
    }
    Ok(ScaleNumbers {
        revisions: g.revision_count(),
        build,
        search_p50: percentile(search.clone(), 0.5),
        search_p95: percentile(search, 0.95),
        traversal_p95: percentile(walks.clone(), 0.95),
        traversal_max: percentile(walks, 1.0),
        largest_traversal: largest,
    })
}

/// Checks the measured numbers against the soft targets.
pub fn scale_smoke(revisions: usize) -> Outcome {
    let n = scale(revisions)?;
    let summary = format!(
        "{} revisions built in {:.1?}; search p50 {:.1?} p95 {:.1?}; depth-10 traversal p95 {:.1?} max {:.1?} (up to {} nodes)",
        n.revisions,
        n.build,
        n.search_p50,
        n.search_p95,
        n.traversal_p95,
        n.traversal_max,
        n.largest_traversal
    );
    ensure!(n.revisions >= revisions, "only {} revisions", n.revisions);
    ensure!(n.search_p95 < Duration::from_millis(250), "search p95 over 250 ms: {summary}");
    ensure!(n.traversal_p95 < Duration::from_millis(100), "traversal p95 over 100 ms: {summary}");
    Ok(summary)
}
