//! The scenario catalog.
//!
//! Cell counts: simple and multi-item hold two scenarios per postulate (14
//! each); chain holds one each for K2 to K5 and two each for Relevance and
//! CoreRetainment (8); temporal holds one per live postulate (6);
//! adversarial holds the seven named stress cases, one per postulate (7).
//! Total 49.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{Category, Postulate, Scenario};
use crate::belief::{
    self, belief_base, conflict_scan, conflicts_in, retrieval_surface, targets, BeliefBase,
    ContractionOutcome, FaultFlags,
};
use crate::clock::{LogicalClock, Timestamp};
use crate::kref::Kref;
use crate::store::{
    BeliefAtom, Content, EdgeType, Graph, Metadata, NewRevision, Predicate, RevisionRef,
    LATEST_TAG,
};
use crate::traversal::analyze_impact;

const PROJECT: &str = "agm";

/// A fresh graph plus the operators under test.
pub struct Harness {
    pub graph: Graph,
    pub clock: Arc<LogicalClock>,
    faults: FaultFlags,
}

type Check = Result<(), String>;

fn fail<T>(msg: impl Into<String>) -> Result<T, String> {
    Err(msg.into())
}

impl Harness {
    pub fn new(faults: FaultFlags) -> Self {
        let clock = Arc::new(LogicalClock::new());
        Harness {
            graph: Graph::new(clock.clone()),
            clock,
            faults,
        }
    }

    fn fresh(&self) -> Harness {
        Harness::new(self.faults)
    }

    pub fn kref(name: &str) -> Kref {
        Kref::new(PROJECT, &["beliefs"], name, "preference").expect("catalog names are tokens")
    }

    pub fn atom(name: &str, p: Predicate, value: &str) -> BeliefAtom {
        BeliefAtom::new(&Self::kref(name), p, value)
    }

    pub fn summary(name: &str, value: &str) -> BeliefAtom {
        Self::atom(name, Predicate::Summary, value)
    }

    fn ensure(&mut self, name: &str) -> Result<Kref, String> {
        let k = Self::kref(name);
        self.graph
            .ensure_item(&k, Metadata::new())
            .map_err(|e| e.to_string())?;
        Ok(k)
    }

    pub fn revise(&mut self, name: &str, atoms: &[BeliefAtom]) -> Result<RevisionRef, String> {
        let k = self.ensure(name)?;
        let summary = atoms
            .iter()
            .find(|a| a.predicate == Predicate::Summary)
            .map_or(String::new(), |a| a.value.clone());
        let new = NewRevision::new(summary).content(atoms.iter().cloned());
        belief::revise_with_faults(&mut self.graph, &k, new, self.faults).map_err(|e| e.to_string())
    }

    pub fn expand(&mut self, name: &str, atom: BeliefAtom) -> Result<RevisionRef, String> {
        let k = self.ensure(name)?;
        belief::expand(&mut self.graph, &k, atom).map_err(|e| e.to_string())
    }

    pub fn contract(&mut self, atom: &BeliefAtom) -> Result<ContractionOutcome, String> {
        let at = self.graph.now();
        belief::contract(&mut self.graph, atom, at).map_err(|e| e.to_string())
    }

    pub fn tag(&mut self, name: &str, tag: &str, seq: u32) -> Check {
        let at = self.graph.now();
        self.graph
            .bind_tag(&Self::kref(name), tag, seq, at)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    fn latest(&self, name: &str) -> Option<RevisionRef> {
        self.graph.tag_target(&Self::kref(name), LATEST_TAG)
    }

    /// Edge between the current revisions of two items.
    pub fn link(&mut self, from: &str, edge: EdgeType, to: &str) -> Check {
        let (Some(s), Some(t)) = (self.latest(from), self.latest(to)) else {
            return fail(format!("{from} or {to} has no current revision"));
        };
        self.graph
            .add_edge(&s, edge, &t, Metadata::new())
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    pub fn base(&self) -> BeliefBase {
        belief_base(&self.graph, None)
    }

    pub fn base_at(&self, at: Timestamp) -> BeliefBase {
        belief_base(&self.graph, Some(at))
    }

    pub fn surface(&self) -> BeliefBase {
        retrieval_surface(&self.graph, None)
    }

    /// Marks a point in time strictly between earlier and later operations.
    pub fn mark(&self) -> Timestamp {
        self.graph.now()
    }
}

fn union(base: &BeliefBase, extra: &[BeliefAtom]) -> Content {
    let mut all = base.atoms.clone();
    all.extend(extra.iter().cloned());
    all
}

fn show(atoms: &Content) -> String {
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

// Postulate checks. Each one performs the operation it is about and then
// inspects only belief bases, tag bindings and edges.

/// K*2: every revised atom is believed afterwards.
fn success(h: &mut Harness, name: &str, atoms: &[BeliefAtom]) -> Check {
    let r = h.revise(name, atoms)?;
    let base = h.base();
    for a in atoms {
        if !base.contains(a) {
            return fail(format!("{a} missing after revision"));
        }
    }
    if h.latest(name) != Some(r) {
        return fail("latest does not point at the new revision");
    }
    Ok(())
}

/// K*3: the revised base is within the old base plus the new content.
fn inclusion(h: &mut Harness, name: &str, atoms: &[BeliefAtom]) -> Check {
    let before = h.base();
    h.revise(name, atoms)?;
    let allowed = union(&before, atoms);
    let extra: Content = h.base().atoms.difference(&allowed).cloned().collect();
    if !extra.is_empty() {
        return fail(format!("unexpected beliefs after revision: {}", show(&extra)));
    }
    Ok(())
}

/// K*4: expanding by a non-conflicting atom keeps everything and adds it.
fn vacuity(h: &mut Harness, name: &str, atom: BeliefAtom) -> Check {
    let new = Content::from([atom.clone()]);
    if !conflict_scan(&h.graph, &new).is_empty() {
        return fail(format!("setup error: {atom} conflicts with the base"));
    }
    let before = h.base();
    h.expand(name, atom.clone())?;
    let after = h.base();
    let lost: Content = union(&before, &[atom]).difference(&after.atoms).cloned().collect();
    if !lost.is_empty() {
        return fail(format!("expansion lost beliefs: {}", show(&lost)));
    }
    Ok(())
}

/// K*5: after revision the current-revision chain holds no conflicting
/// atoms about the revised subjects, and the replaced revision is linked by
/// SUPERSEDES rather than left competing.
fn consistency(h: &mut Harness, name: &str, atoms: &[BeliefAtom]) -> Check {
    let prior = h.latest(name);
    let new = h.revise(name, atoms)?;
    if let Some(prior) = &prior {
        if !h.graph.has_edge(&new, EdgeType::Supersedes, prior) {
            return fail(format!("no SUPERSEDES edge {new} -> {prior}"));
        }
        if h.graph.tags_on(prior).iter().any(|t| t == LATEST_TAG) {
            return fail("superseded revision still bound to latest");
        }
    }
    let subjects: BTreeSet<&Kref> = atoms.iter().map(|a| &a.subject).collect();
    let chain = BeliefBase {
        atoms: h
            .graph
            .open_bindings()
            .into_iter()
            .filter(|(t, _)| t == LATEST_TAG)
            .filter_map(|(_, r)| h.graph.revision(&r).ok())
            .filter(|rev| !h.graph.item(rev.item()).is_ok_and(|i| i.deprecated))
            .flat_map(|rev| rev.content().iter().cloned())
            .collect(),
        as_of: None,
    };
    if let Some((a, b)) = conflicts_in(&chain)
        .into_iter()
        .find(|(a, _)| subjects.contains(&a.subject))
    {
        return fail(format!("conflicting beliefs {a} and {b}"));
    }
    Ok(())
}

/// K*6: equal inputs from equal prior states give equal bases.
fn extensionality(
    h: &mut Harness,
    setup: fn(&mut Harness) -> Check,
    name: &str,
    left: &[BeliefAtom],
    right: &[BeliefAtom],
) -> Check {
    let l: Content = left.iter().cloned().collect();
    let r: Content = right.iter().cloned().collect();
    if l != r {
        return fail("setup error: inputs are not equal as sets");
    }
    let mut other = h.fresh();
    setup(h)?;
    setup(&mut other)?;
    if h.base() != other.base() {
        return fail("setup produced different prior states");
    }
    h.revise(name, left)?;
    other.revise(name, right)?;
    if h.base().atoms != other.base().atoms {
        return fail("equal revisions produced different belief bases");
    }
    if h.surface().atoms != other.surface().atoms {
        return fail("equal revisions produced different retrieval surfaces");
    }
    Ok(())
}

struct Contraction {
    before: BeliefBase,
    after: BeliefBase,
    targeted: Vec<Content>,
}

fn contract_and_observe(h: &mut Harness, atom: &BeliefAtom) -> Result<Contraction, String> {
    let before = h.base();
    let set = targets(&h.graph, atom);
    let outcome = h.contract(atom)?;
    let removed: BTreeSet<_> = outcome.removed_tags.iter().cloned().collect();
    if removed != set.pairs {
        return fail("contraction removed a different set of bindings than targeted");
    }
    let targeted = set
        .pairs
        .iter()
        .map(|(_, r)| h.graph.revision(r).map(|rev| rev.content().clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let after = h.base();
    if after.contains(atom) || h.surface().contains(atom) {
        return fail(format!("{atom} still believed after contraction"));
    }
    Ok(Contraction {
        before,
        after,
        targeted,
    })
}

/// Relevance: only revisions containing the atom lose their bindings, and
/// every removed belief co-occurred with it in one of them.
fn relevance(h: &mut Harness, atom: &BeliefAtom) -> Check {
    let c = contract_and_observe(h, atom)?;
    if let Some(t) = c.targeted.iter().find(|t| !t.contains(atom)) {
        return fail(format!("detagged a revision without the atom: {}", show(t)));
    }
    for b in c.before.atoms.difference(&c.after.atoms) {
        if !c.targeted.iter().any(|t| t.contains(b)) {
            return fail(format!("{b} removed without co-occurring with {atom}"));
        }
    }
    Ok(())
}

/// Core-Retainment: each removed belief has a witness revision holding both
/// it and the atom, the surviving base no longer holds the atom, and nothing
/// outside the targeted revisions was lost.
fn core_retainment(h: &mut Harness, atom: &BeliefAtom) -> Check {
    let c = contract_and_observe(h, atom)?;
    for b in c.before.atoms.difference(&c.after.atoms) {
        let Some(witness) = c.targeted.iter().find(|t| t.contains(b) && t.contains(atom)) else {
            return fail(format!("{b} removed without a witness revision"));
        };
        let mut rest = c.after.atoms.clone();
        rest.extend(witness.iter().filter(|x| *x != atom && *x != b).cloned());
        if rest.contains(atom) {
            return fail(format!("{atom} survives elsewhere; contraction not exhaustive"));
        }
    }
    let touched: Content = c.targeted.iter().flatten().cloned().collect();
    let kept: Content = c.before.atoms.difference(&touched).cloned().collect();
    let lost: Content = kept.difference(&c.after.atoms).cloned().collect();
    if !lost.is_empty() {
        return fail(format!("uninvolved beliefs lost: {}", show(&lost)));
    }
    Ok(())
}

// Seeds.

fn s(name: &str, v: &str) -> BeliefAtom {
    Harness::summary(name, v)
}

fn a(name: &str, p: Predicate, v: &str) -> BeliefAtom {
    Harness::atom(name, p, v)
}

fn seed_color(h: &mut Harness) -> Check {
    h.revise(
        "color",
        &[s("color", "warm tones"), a("color", Predicate::Topic, "color")],
    )?;
    Ok(())
}

fn seed_multi(h: &mut Harness) -> Check {
    seed_color(h)?;
    h.revise(
        "palette",
        &[
            s("palette", "earth-tone palette"),
            a("palette", Predicate::Topic, "design"),
        ],
    )?;
    h.revise(
        "drink",
        &[s("drink", "likes tea"), a("drink", Predicate::Keyword, "tea")],
    )?;
    Ok(())
}

/// palette DEPENDS_ON color, mockup DERIVED_FROM palette.
fn seed_chain(h: &mut Harness) -> Check {
    seed_multi(h)?;
    h.revise(
        "mockup",
        &[s("mockup", "earthy mockup"), a("mockup", Predicate::Type, "design")],
    )?;
    h.link("palette", EdgeType::DependsOn, "color")?;
    h.link("mockup", EdgeType::DerivedFrom, "palette")?;
    Ok(())
}

fn chain_intact(h: &Harness) -> Check {
    let root = RevisionRef::new(&Harness::kref("color"), 1);
    let impact = analyze_impact(&h.graph, &root, 10).map_err(|e| e.to_string())?;
    let items: BTreeSet<String> = impact
        .revisions()
        .iter()
        .map(|r| r.item.item_name().to_string())
        .collect();
    if !items.contains("palette") || !items.contains("mockup") {
        return fail(format!("dependency chain broken: impact reaches {items:?}"));
    }
    Ok(())
}

/// Asserts the base as of `t` still equals `expected`.
fn history_holds(h: &Harness, t: Timestamp, expected: &BeliefBase) -> Check {
    if h.base_at(t).atoms != expected.atoms {
        return fail(format!("base at {} changed after later operations", t.millis()));
    }
    Ok(())
}

macro_rules! scenario {
    ($id:literal, $cat:ident, $post:ident, $setup:literal, $check:expr) => {
        Scenario {
            id: $id,
            category: Category::$cat,
            postulate: Postulate::$post,
            setup: $setup,
            check: $check,
        }
    };
}

pub fn scenario_catalog() -> Vec<Scenario> {
    vec![
        // simple
        scenario!("k2-simple-fresh", Simple, K2, "revise a new item", |h| {
            success(h, "color", &[s("color", "cool tones")])
        }),
        scenario!("k2-simple-replace", Simple, K2, "seed color, revise its summary", |h| {
            seed_color(h)?;
            success(h, "color", &[s("color", "cool tones")])
        }),
        scenario!("k3-simple-fresh", Simple, K3, "revise a new item", |h| {
            inclusion(h, "color", &[s("color", "cool tones")])
        }),
        scenario!("k3-simple-replace", Simple, K3, "seed color, revise its summary", |h| {
            seed_color(h)?;
            inclusion(h, "color", &[s("color", "cool tones"), a("color", Predicate::Tag, "ui")])
        }),
        scenario!("k4-simple-new-predicate", Simple, K4, "seed color, expand by a keyword", |h| {
            seed_color(h)?;
            vacuity(h, "color", a("color", Predicate::Keyword, "sunset"))
        }),
        scenario!("k4-simple-new-item", Simple, K4, "seed color, expand another item", |h| {
            seed_color(h)?;
            vacuity(h, "shape", s("shape", "round"))
        }),
        scenario!("k5-simple-replace", Simple, K5, "seed color, revise its summary", |h| {
            seed_color(h)?;
            consistency(h, "color", &[s("color", "cool tones")])
        }),
        scenario!("k5-simple-second", Simple, K5, "seed color, revise twice", |h| {
            seed_color(h)?;
            h.revise("color", &[s("color", "neutral tones")])?;
            consistency(h, "color", &[s("color", "cool tones")])
        }),
        scenario!("k6-simple-reordered", Simple, K6, "seed color, revise by permuted atoms", |h| {
            extensionality(
                h,
                seed_color,
                "color",
                &[s("color", "cool tones"), a("color", Predicate::Topic, "color")],
                &[
                    a("color", Predicate::Topic, "color"),
                    s("color", "cool tones"),
                    a("color", Predicate::Topic, "color"),
                ],
            )
        }),
        scenario!("k6-simple-empty-prior", Simple, K6, "revise a new item twice over", |h| {
            extensionality(
                h,
                |_| Ok(()),
                "color",
                &[s("color", "cool tones")],
                &[s("color", "cool tones")],
            )
        }),
        scenario!("rel-simple-colocated", Simple, Relevance, "seed color, contract summary", |h| {
            seed_color(h)?;
            relevance(h, &s("color", "warm tones"))
        }),
        scenario!("rel-simple-absent", Simple, Relevance, "seed color, contract absent atom", |h| {
            seed_color(h)?;
            let before = h.base();
            relevance(h, &s("color", "purple"))?;
            if h.base() != before {
                return fail("contracting an absent atom changed the base");
            }
            Ok(())
        }),
        scenario!("core-simple-colocated", Simple, CoreRetainment, "seed color, contract summary", |h| {
            seed_color(h)?;
            core_retainment(h, &s("color", "warm tones"))
        }),
        scenario!("core-simple-sole-atom", Simple, CoreRetainment, "single-atom item, contract it", |h| {
            h.revise("shape", &[s("shape", "round")])?;
            seed_color(h)?;
            core_retainment(h, &s("shape", "round"))
        }),
        // multi-item
        scenario!("k2-multi-one-of-three", MultiItem, K2, "seed three items, revise one", |h| {
            seed_multi(h)?;
            success(h, "palette", &[s("palette", "pastel palette")])
        }),
        scenario!("k2-multi-each", MultiItem, K2, "seed three items, revise each in turn", |h| {
            seed_multi(h)?;
            success(h, "color", &[s("color", "cool tones")])?;
            success(h, "drink", &[s("drink", "likes coffee")])?;
            let base = h.base();
            if !base.contains(&s("color", "cool tones")) {
                return fail("earlier revision lost by a later one on another item");
            }
            Ok(())
        }),
        scenario!("k3-multi-one-of-three", MultiItem, K3, "seed three items, revise one", |h| {
            seed_multi(h)?;
            inclusion(h, "drink", &[s("drink", "likes coffee")])
        }),
        scenario!("k3-multi-cross-subject", MultiItem, K3, "revise an item with an atom about another", |h| {
            seed_multi(h)?;
            inclusion(
                h,
                "palette",
                &[s("palette", "cool palette"), a("color", Predicate::Topic, "design")],
            )
        }),
        scenario!("k4-multi-fresh-item", MultiItem, K4, "seed three items, expand a fourth", |h| {
            seed_multi(h)?;
            vacuity(h, "font", s("font", "serif"))
        }),
        scenario!("k4-multi-existing-item", MultiItem, K4, "seed three items, expand one", |h| {
            seed_multi(h)?;
            vacuity(h, "drink", a("drink", Predicate::Topic, "beverages"))
        }),
        scenario!("k5-multi-one-of-three", MultiItem, K5, "seed three items, revise one", |h| {
            seed_multi(h)?;
            consistency(h, "color", &[s("color", "cool tones")])
        }),
        scenario!("k5-multi-two-revised", MultiItem, K5, "seed three items, revise two", |h| {
            seed_multi(h)?;
            consistency(h, "color", &[s("color", "cool tones")])?;
            consistency(h, "palette", &[s("palette", "pastel palette")])
        }),
        scenario!("k6-multi-reordered", MultiItem, K6, "seed three items, revise by permuted atoms", |h| {
            extensionality(
                h,
                seed_multi,
                "drink",
                &[s("drink", "likes coffee"), a("drink", Predicate::Keyword, "coffee")],
                &[a("drink", Predicate::Keyword, "coffee"), s("drink", "likes coffee")],
            )
        }),
        scenario!("k6-multi-other-item", MultiItem, K6, "seed three items, revise a new one", |h| {
            extensionality(h, seed_multi, "font", &[s("font", "serif")], &[s("font", "serif")])
        }),
        scenario!("rel-multi-shared-atom", MultiItem, Relevance, "same atom stored in two items, contract it", |h| {
            seed_multi(h)?;
            let shared = a("color", Predicate::Topic, "design");
            h.expand("palette", shared.clone())?;
            h.expand("color", shared.clone())?;
            relevance(h, &shared)
        }),
        scenario!("rel-multi-one-item", MultiItem, Relevance, "seed three items, contract one summary", |h| {
            seed_multi(h)?;
            relevance(h, &s("drink", "likes tea"))?;
            if !h.base().contains(&s("color", "warm tones")) {
                return fail("unrelated item lost its beliefs");
            }
            Ok(())
        }),
        scenario!("core-multi-shared-atom", MultiItem, CoreRetainment, "same atom stored in two items, contract it", |h| {
            seed_multi(h)?;
            let shared = a("color", Predicate::Topic, "design");
            h.expand("palette", shared.clone())?;
            h.expand("drink", shared.clone())?;
            core_retainment(h, &shared)
        }),
        scenario!("core-multi-one-item", MultiItem, CoreRetainment, "seed three items, contract one summary", |h| {
            seed_multi(h)?;
            core_retainment(h, &s("palette", "earth-tone palette"))
        }),
        // chain
        scenario!("k2-chain-root", Chain, K2, "color <- palette <- mockup, revise color", |h| {
            seed_chain(h)?;
            success(h, "color", &[s("color", "cool tones")])?;
            chain_intact(h)
        }),
        scenario!("k3-chain-middle", Chain, K3, "color <- palette <- mockup, revise palette", |h| {
            seed_chain(h)?;
            inclusion(h, "palette", &[s("palette", "cool palette")])?;
            chain_intact(h)
        }),
        scenario!("k4-chain-leaf", Chain, K4, "color <- palette <- mockup, expand mockup", |h| {
            seed_chain(h)?;
            vacuity(h, "mockup", a("mockup", Predicate::Keyword, "draft"))?;
            chain_intact(h)
        }),
        scenario!("k5-chain-root", Chain, K5, "color <- palette <- mockup, revise color", |h| {
            seed_chain(h)?;
            consistency(h, "color", &[s("color", "cool tones")])?;
            chain_intact(h)
        }),
        scenario!("rel-chain-root", Chain, Relevance, "color <- palette <- mockup, contract color summary", |h| {
            seed_chain(h)?;
            relevance(h, &s("color", "warm tones"))?;
            if !h.base().contains(&s("palette", "earth-tone palette")) {
                return fail("dependent item lost beliefs when its dependency was contracted");
            }
            chain_intact(h)
        }),
        scenario!("rel-chain-middle", Chain, Relevance, "color <- palette <- mockup, contract palette topic", |h| {
            seed_chain(h)?;
            relevance(h, &a("palette", Predicate::Topic, "design"))?;
            chain_intact(h)
        }),
        scenario!("core-chain-root", Chain, CoreRetainment, "color <- palette <- mockup, contract color topic", |h| {
            seed_chain(h)?;
            core_retainment(h, &a("color", Predicate::Topic, "color"))?;
            chain_intact(h)
        }),
        scenario!("core-chain-leaf", Chain, CoreRetainment, "color <- palette <- mockup, contract mockup summary", |h| {
            seed_chain(h)?;
            core_retainment(h, &s("mockup", "earthy mockup"))?;
            chain_intact(h)
        }),
        // temporal
        scenario!("k2-temporal", Temporal, K2, "revise color over time, check past and present", |h| {
            seed_color(h)?;
            let t1 = h.mark();
            let b1 = h.base();
            success(h, "color", &[s("color", "cool tones")])?;
            history_holds(h, t1, &b1)?;
            if !h.base_at(t1).contains(&s("color", "warm tones")) {
                return fail("historical belief missing");
            }
            Ok(())
        }),
        scenario!("k3-temporal", Temporal, K3, "three revisions, inclusion at each step", |h| {
            seed_color(h)?;
            let mut marks = Vec::new();
            for v in ["cool tones", "neutral tones", "bright tones"] {
                marks.push((h.mark(), h.base()));
                inclusion(h, "color", &[s("color", v)])?;
            }
            for (t, b) in &marks {
                history_holds(h, *t, b)?;
            }
            Ok(())
        }),
        scenario!("k4-temporal", Temporal, K4, "expand after a rollback", |h| {
            seed_color(h)?;
            h.revise("color", &[s("color", "cool tones")])?;
            let t = h.mark();
            let at = h.graph.now();
            belief::rollback(&mut h.graph, &Harness::kref("color"), LATEST_TAG, 1, at)
                .map_err(|e| e.to_string())?;
            if !h.base().contains(&s("color", "warm tones")) {
                return fail("rollback did not restore the earlier content");
            }
            let b = h.base_at(t);
            vacuity(h, "color", a("color", Predicate::Keyword, "amber"))?;
            history_holds(h, t, &b)
        }),
        scenario!("k5-temporal", Temporal, K5, "revise, wait, revise again", |h| {
            seed_color(h)?;
            h.clock.advance(1000);
            consistency(h, "color", &[s("color", "cool tones")])?;
            h.clock.advance(1000);
            let t = h.mark();
            consistency(h, "color", &[s("color", "black")])?;
            if !h.base_at(t).contains(&s("color", "cool tones")) {
                return fail("intermediate belief missing from history");
            }
            Ok(())
        }),
        scenario!("k6-temporal", Temporal, K6, "equal histories, equal bases at every time", |h| {
            fn history(h: &mut Harness) -> Check {
                seed_color(h)?;
                h.clock.advance(500);
                h.revise("color", &[s("color", "cool tones")])?;
                Ok(())
            }
            let mut other = h.fresh();
            history(h)?;
            history(&mut other)?;
            h.revise("color", &[s("color", "black"), a("color", Predicate::Tag, "dark")])?;
            other.revise("color", &[a("color", Predicate::Tag, "dark"), s("color", "black")])?;
            let end = h.clock.peek().millis().max(other.clock.peek().millis());
            for t in 0..=end {
                if h.base_at(Timestamp(t)) != other.base_at(Timestamp(t)) {
                    return fail(format!("histories diverge at {t}"));
                }
            }
            Ok(())
        }),
        scenario!("rel-temporal", Temporal, Relevance, "contract, then check the past is untouched", |h| {
            seed_multi(h)?;
            let t = h.mark();
            let b = h.base();
            relevance(h, &s("palette", "earth-tone palette"))?;
            history_holds(h, t, &b)
        }),
        // adversarial
        scenario!("adv-case-variant-values", Adversarial, K5, "revise Blue to blue to BLUE", |h| {
            h.revise("color", &[s("color", "Blue")])?;
            consistency(h, "color", &[s("color", "blue")])?;
            consistency(h, "color", &[s("color", "BLUE")])?;
            let base = h.base();
            if base.contains(&s("color", "blue")) || !base.contains(&s("color", "BLUE")) {
                return fail("case variants were conflated");
            }
            Ok(())
        }),
        scenario!("adv-long-values", Adversarial, K2, "revise with a 10,000 character value", |h| {
            let long = "tones ".repeat(1700);
            success(h, "color", &[s("color", long.trim_end())])
        }),
        scenario!("adv-rapid-revisions", Adversarial, K3, "10 consecutive revisions of one item", |h| {
            seed_color(h)?;
            for i in 0..10 {
                inclusion(h, "color", &[s("color", &format!("shade {i}"))])?;
            }
            let k = Harness::kref("color");
            let revs = h.graph.revisions_of(&k).map_err(|e| e.to_string())?.len();
            let chain = (2..=revs as u32)
                .filter(|&n| {
                    h.graph.has_edge(
                        &RevisionRef::new(&k, n),
                        EdgeType::Supersedes,
                        &RevisionRef::new(&k, n - 1),
                    )
                })
                .count();
            if revs != 11 || chain != 10 {
                return fail(format!("{revs} revisions, {chain} SUPERSEDES links"));
            }
            let base = h.base();
            if base.len() != 1 || !base.contains(&s("color", "shade 9")) {
                return fail(format!("final base is {}", show(&base.atoms)));
            }
            Ok(())
        }),
        scenario!("adv-similar-names", Adversarial, K4, "color and colour are distinct items", |h| {
            seed_color(h)?;
            vacuity(h, "colour", s("colour", "cool tones"))?;
            if !h.base().contains(&s("color", "warm tones")) {
                return fail("colour expansion touched color");
            }
            Ok(())
        }),
        scenario!("adv-idempotent-revisions", Adversarial, K6, "revise by the same content twice", |h| {
            extensionality(
                h,
                |h| {
                    seed_color(h)?;
                    h.revise("color", &[s("color", "cool tones")])?;
                    Ok(())
                },
                "color",
                &[s("color", "cool tones")],
                &[s("color", "cool tones"), s("color", "cool tones")],
            )?;
            if h.base().len() != 1 {
                return fail("repeating a revision changed the base size");
            }
            Ok(())
        }),
        scenario!("adv-deep-chain", Adversarial, Relevance, "A -> B -> C -> D dependency chain, contract A", |h| {
            for n in ["a", "b", "c", "d"] {
                h.revise(n, &[s(n, &format!("node {n}")), a(n, Predicate::Type, "step")])?;
            }
            h.link("a", EdgeType::DependsOn, "b")?;
            h.link("b", EdgeType::DependsOn, "c")?;
            h.link("c", EdgeType::DependsOn, "d")?;
            relevance(h, &s("a", "node a"))?;
            let leaf = h.latest("d").ok_or("leaf has no revision")?;
            let impact = analyze_impact(&h.graph, &leaf, 10).map_err(|e| e.to_string())?;
            if impact.revisions().len() != 3 {
                return fail(format!("impact from leaf reaches {}", impact.revisions().len()));
            }
            Ok(())
        }),
        scenario!("adv-mixed-edges", Adversarial, CoreRetainment, "all edge types around the contracted item", |h| {
            seed_chain(h)?;
            h.revise("notes", &[s("notes", "meeting notes")])?;
            h.revise("bundle", &[s("bundle", "design set")])?;
            h.link("notes", EdgeType::Referenced, "color")?;
            h.link("notes", EdgeType::CreatedFrom, "drink")?;
            h.link("bundle", EdgeType::Contains, "color")?;
            h.revise("color", &[s("color", "warm tones"), a("color", Predicate::Keyword, "rust")])?;
            core_retainment(h, &s("color", "warm tones"))?;
            let edges = h.graph.edges().iter().map(|e| e.edge_type).collect::<BTreeSet<_>>();
            if edges.len() != EdgeType::ALL.len() {
                return fail(format!("only {} edge types present", edges.len()));
            }
            Ok(())
        }),
    ]
}
