mod common;

use cogmem_core::belief::{belief_base, contract, expand, revise};
use cogmem_core::clock::Timestamp;
use cogmem_core::store::{BeliefAtom, Content, EdgeType, Metadata, NewRevision, LATEST_TAG};
use cogmem_core::traversal::{analyze_impact, shortest_path, traverse, Direction, TraverseOptions};
use cogmem_core::{Graph, Kref, RevisionRef};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{graph, kref_text, reach, MALFORMED};

proptest! {
    #[test]
    fn kref_text_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (canon, alt) = kref_text(&mut rng);
        let k = Kref::parse(&canon).unwrap();
        prop_assert_eq!(k.to_string(), canon.clone());
        prop_assert_eq!(Kref::parse(&alt).unwrap(), k.clone());
        prop_assert_eq!(Kref::parse(&k.to_string()).unwrap(), k);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,40}") {
        let _ = Kref::parse(&s);
    }
}

#[test]
fn every_malformed_class_is_rejected() {
    for bad in MALFORMED {
        assert!(Kref::parse(bad).is_err(), "accepted {bad:?}");
    }
}

const EDGE_TYPES: [EdgeType; 6] = EdgeType::ALL;

/// Random graph: `n` single-revision items plus `m` random typed edges,
/// self-edges and SUPERSEDES skipped.
fn random_graph(n: usize, edges: &[(usize, usize, usize)]) -> (Graph, Vec<RevisionRef>, Vec<(RevisionRef, EdgeType, RevisionRef)>) {
    let (mut g, _) = graph();
    let nodes: Vec<RevisionRef> = (0..n)
        .map(|i| {
            let k = Kref::parse(&format!("kref://p/s/n{i:02}.fact")).unwrap();
            g.create_item(&k, Metadata::new()).unwrap();
            g.create_revision(&k, NewRevision::new(format!("node {i}"))).unwrap().reference()
        })
        .collect();
    let mut list = Vec::new();
    for &(a, b, t) in edges {
        let (a, b, t) = (a % n, b % n, EDGE_TYPES[t % EDGE_TYPES.len()]);
        if a == b || t == EdgeType::Supersedes || g.has_edge(&nodes[a], t, &nodes[b]) {
            continue;
        }
        g.add_edge(&nodes[a], t, &nodes[b], Metadata::new()).unwrap();
        list.push((nodes[a].clone(), t, nodes[b].clone()));
    }
    (g, nodes, list)
}

fn edge_list() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0usize..64, 0usize..64, 0usize..6), 0..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traversal_matches_brute_force(n in 2usize..16, edges in edge_list(), depth in 1u32..6, start in 0usize..16) {
        let (g, nodes, list) = random_graph(n, &edges);
        let origin = &nodes[start % n];
        for (dir, out, inc) in [
            (Direction::Outgoing, true, false),
            (Direction::Incoming, false, true),
            (Direction::Both, true, true),
        ] {
            let got = traverse(&g, origin, &TraverseOptions::new(dir, depth)).unwrap();
            let want = reach(&list, origin, depth, out, inc, None);
            prop_assert_eq!(got.revisions(), want.keys().cloned().collect());
            for (r, d) in &want {
                prop_assert_eq!(got.depth_of(r), Some(*d));
            }
        }
    }

    #[test]
    fn impact_matches_brute_force(n in 2usize..16, edges in edge_list(), depth in 1u32..6, start in 0usize..16) {
        let (g, nodes, list) = random_graph(n, &edges);
        let origin = &nodes[start % n];
        let types = [EdgeType::DependsOn, EdgeType::DerivedFrom, EdgeType::Supersedes];
        let mut want = reach(&list, origin, depth, false, true, Some(&types));
        want.remove(origin);
        let got = analyze_impact(&g, origin, depth).unwrap();
        prop_assert_eq!(got.revisions(), want.keys().cloned().collect());
    }

    #[test]
    fn shortest_path_has_brute_force_length(n in 2usize..16, edges in edge_list(), a in 0usize..16, b in 0usize..16) {
        let (g, nodes, list) = random_graph(n, &edges);
        let (a, b) = (&nodes[a % n], &nodes[b % n]);
        let dist = reach(&list, a, u32::MAX, true, true, None);
        match shortest_path(&g, a, b).unwrap() {
            Some(path) => {
                prop_assert_eq!(Some(path.len() as u32), dist.get(b).copied());
                let mut cur = a.clone();
                for (next, t) in &path {
                    prop_assert!(g.has_edge(&cur, *t, next) || g.has_edge(next, *t, &cur));
                    cur = next.clone();
                }
            }
            None => prop_assert!(!dist.contains_key(b)),
        }
    }
}

fn item(i: usize) -> Kref {
    Kref::parse(&format!("kref://p/beliefs/i{i}.fact")).unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    Expand(usize, u8),
    Revise(usize, u8),
    Contract(usize, u8),
    Rollback(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..4, 0u8..6).prop_map(|(i, v)| Op::Expand(i, v)),
        (0usize..4, 0u8..6).prop_map(|(i, v)| Op::Revise(i, v)),
        (0usize..4, 0u8..6).prop_map(|(i, v)| Op::Contract(i, v)),
        (0usize..4).prop_map(Op::Rollback),
    ]
}

fn apply(g: &mut Graph, op: &Op) {
    match *op {
        Op::Expand(i, v) => {
            let k = item(i);
            g.ensure_item(&k, Metadata::new()).unwrap();
            expand(g, &k, BeliefAtom::summary(&k, format!("v{v}"))).unwrap();
        }
        Op::Revise(i, v) => {
            let k = item(i);
            g.ensure_item(&k, Metadata::new()).unwrap();
            let atom = BeliefAtom::summary(&k, format!("v{v}"));
            revise(g, &k, NewRevision::new(format!("v{v}")).content([atom])).unwrap();
        }
        Op::Contract(i, v) => {
            let k = item(i);
            let now = g.now();
            contract(g, &BeliefAtom::summary(&k, format!("v{v}")), now).unwrap();
        }
        Op::Rollback(i) => {
            let k = item(i);
            if g.contains_item(&k) && !g.item(&k).unwrap().deprecated {
                let now = g.now();
                g.bind_tag(&k, LATEST_TAG, 1, now).unwrap();
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_only_adds(ops in prop::collection::vec(op(), 0..12), i in 0usize..4, v in 0u8..6) {
        let (mut g, _) = graph();
        for o in &ops {
            apply(&mut g, o);
        }
        let k = item(i);
        prop_assume!(!g.contains_item(&k) || !g.item(&k).unwrap().deprecated);
        let before = belief_base(&g, None);
        let atom = BeliefAtom::summary(&k, format!("v{v}"));
        apply(&mut g, &Op::Expand(i, v));
        let after = belief_base(&g, None);
        prop_assert!(after.contains(&atom));
        prop_assert!(before.atoms.iter().all(|a| after.contains(a)));
        prop_assert!(after.atoms.iter().all(|a| a == &atom || before.contains(a)));
    }

    #[test]
    fn past_bases_never_change(ops in prop::collection::vec(op(), 1..16)) {
        let (mut g, _) = graph();
        let mut snapshots: Vec<(Timestamp, Content)> = Vec::new();
        for o in &ops {
            apply(&mut g, o);
            let t = g.now();
            snapshots.push((t, belief_base(&g, None).atoms));
        }
        for (t, atoms) in &snapshots {
            prop_assert_eq!(&belief_base(&g, Some(*t)).atoms, atoms);
        }
    }
}
