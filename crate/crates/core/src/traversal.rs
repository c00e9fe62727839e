//! Breadth-first navigation over typed revision edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::store::{EdgeType, Graph, RevisionRef};

pub const DEFAULT_DEPTH: u32 = 10;
pub const MAX_DEPTH: u32 = 20;

/// Edge types that carry validity, followed by impact analysis.
pub const IMPACT_EDGES: [EdgeType; 3] = [
    EdgeType::DependsOn,
    EdgeType::DerivedFrom,
    EdgeType::Supersedes,
];
pub const PROVENANCE_EDGES: [EdgeType; 2] = [EdgeType::DerivedFrom, EdgeType::CreatedFrom];

#[derive(Debug, Error, PartialEq)]
pub enum TraversalError {
    #[error("unknown revision {0}")]
    UnknownRevision(RevisionRef),
    #[error("depth {0} is outside 1..={MAX_DEPTH}")]
    DepthOutOfRange(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outgoing,
    Incoming,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Visit {
    pub revision: RevisionRef,
    pub depth: u32,
    /// Edge type that first reached this revision; `None` for the origin.
    pub via: Option<EdgeType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraversalResult {
    pub origin: RevisionRef,
    pub visited: Vec<Visit>,
    pub direction: Direction,
}

impl TraversalResult {
    pub fn revisions(&self) -> BTreeSet<RevisionRef> {
        self.visited.iter().map(|v| v.revision.clone()).collect()
    }

    pub fn depth_of(&self, r: &RevisionRef) -> Option<u32> {
        self.visited.iter().find(|v| &v.revision == r).map(|v| v.depth)
    }
}

#[derive(Debug, Clone)]
pub struct TraverseOptions {
    pub direction: Direction,
    pub edge_types: Option<BTreeSet<EdgeType>>,
    pub depth: u32,
    pub max_nodes: Option<usize>,
}

impl Default for TraverseOptions {
    fn default() -> Self {
        TraverseOptions {
            direction: Direction::Outgoing,
            edge_types: None,
            depth: DEFAULT_DEPTH,
            max_nodes: None,
        }
    }
}

impl TraverseOptions {
    pub fn new(direction: Direction, depth: u32) -> Self {
        TraverseOptions {
            direction,
            depth,
            ..Default::default()
        }
    }

    pub fn edges(mut self, types: impl IntoIterator<Item = EdgeType>) -> Self {
        self.edge_types = Some(types.into_iter().collect());
        self
    }
}

fn check(graph: &Graph, r: &RevisionRef, depth: u32) -> Result<(), TraversalError> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(TraversalError::DepthOutOfRange(depth));
    }
    if !graph.contains_revision(r) {
        return Err(TraversalError::UnknownRevision(r.clone()));
    }
    Ok(())
}

fn order_key(r: &RevisionRef) -> (String, u32) {
    (r.item.to_string(), r.seq)
}

/// Neighbours of `r` in canonical (kref text, seq) order.
fn neighbours(
    graph: &Graph,
    r: &RevisionRef,
    direction: Direction,
    types: Option<&BTreeSet<EdgeType>>,
) -> Vec<(RevisionRef, EdgeType)> {
    let allowed = |t: EdgeType| types.is_none_or(|s| s.contains(&t));
    let mut out = Vec::new();
    if matches!(direction, Direction::Outgoing | Direction::Both) {
        out.extend(
            graph
                .edges_from(r)
                .filter(|e| allowed(e.edge_type))
                .map(|e| (e.target.clone(), e.edge_type)),
        );
    }
    if matches!(direction, Direction::Incoming | Direction::Both) {
        out.extend(
            graph
                .edges_to(r)
                .filter(|e| allowed(e.edge_type))
                .map(|e| (e.source.clone(), e.edge_type)),
        );
    }
    out.sort_by_cached_key(|(n, t)| (order_key(n), *t));
    out
}

pub fn traverse(
    graph: &Graph,
    origin: &RevisionRef,
    opts: &TraverseOptions,
) -> Result<TraversalResult, TraversalError> {
    check(graph, origin, opts.depth)?;
    let cap = opts.max_nodes.unwrap_or(usize::MAX);
    let mut seen: HashSet<RevisionRef> = HashSet::from([origin.clone()]);
    let mut visited = vec![Visit {
        revision: origin.clone(),
        depth: 0,
        via: None,
    }];
    let mut queue = VecDeque::from([(origin.clone(), 0u32)]);
    'bfs: while let Some((node, d)) = queue.pop_front() {
        if d == opts.depth {
            continue;
        }
        for (next, via) in neighbours(graph, &node, opts.direction, opts.edge_types.as_ref()) {
            if visited.len() >= cap {
                break 'bfs;
            }
            if seen.insert(next.clone()) {
                visited.push(Visit {
                    revision: next.clone(),
                    depth: d + 1,
                    via: Some(via),
                });
                queue.push_back((next, d + 1));
            }
        }
    }
    Ok(TraversalResult {
        origin: origin.clone(),
        visited,
        direction: opts.direction,
    })
}

/// A minimum-hop path from `a` to `b` ignoring edge direction, as the
/// sequence of revisions after `a` with the edge type used to reach each.
/// Among equally short paths the lexicographically smallest (by kref text,
/// then seq) wins. `None` when the two are disconnected.
pub fn shortest_path(
    graph: &Graph,
    a: &RevisionRef,
    b: &RevisionRef,
) -> Result<Option<Vec<(RevisionRef, EdgeType)>>, TraversalError> {
    for r in [a, b] {
        if !graph.contains_revision(r) {
            return Err(TraversalError::UnknownRevision(r.clone()));
        }
    }
    if a == b {
        return Ok(Some(Vec::new()));
    }
    let mut parent: HashMap<RevisionRef, (RevisionRef, EdgeType)> = HashMap::new();
    let mut seen: HashSet<RevisionRef> = HashSet::from([a.clone()]);
    let mut queue = VecDeque::from([a.clone()]);
    while let Some(node) = queue.pop_front() {
        for (next, via) in neighbours(graph, &node, Direction::Both, None) {
            if !seen.insert(next.clone()) {
                continue;
            }
            parent.insert(next.clone(), (node.clone(), via));
            if &next == b {
                let mut path = Vec::new();
                let mut cur = next;
                while &cur != a {
                    let (p, t) = parent[&cur].clone();
                    path.push((cur, t));
                    cur = p;
                }
                path.reverse();
                return Ok(Some(path));
            }
            queue.push_back(next);
        }
    }
    Ok(None)
}

/// Revisions that transitively depend on `r` through DEPENDS_ON,
/// DERIVED_FROM or SUPERSEDES edges. Whatever depended on a revision that
/// `r` supersedes is affected too, so the walk also steps from `r` down its
/// outgoing SUPERSEDES chain; that chain is the starting frontier and is not
/// reported, nor is `r` itself.
pub fn analyze_impact(
    graph: &Graph,
    r: &RevisionRef,
    depth: u32,
) -> Result<TraversalResult, TraversalError> {
    check(graph, r, depth)?;
    let impact: BTreeSet<EdgeType> = IMPACT_EDGES.into_iter().collect();
    let supersedes = BTreeSet::from([EdgeType::Supersedes]);
    let mut seen: HashSet<RevisionRef> = HashSet::from([r.clone()]);
    let mut visited = Vec::new();
    // (node, depth, on the supersession chain of `r`)
    let mut queue = VecDeque::from([(r.clone(), 0u32, true)]);
    while let Some((node, d, chain)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        let mut next: Vec<(RevisionRef, EdgeType, bool)> = Vec::new();
        if chain {
            next.extend(
                neighbours(graph, &node, Direction::Outgoing, Some(&supersedes))
                    .into_iter()
                    .map(|(n, t)| (n, t, true)),
            );
        }
        next.extend(
            neighbours(graph, &node, Direction::Incoming, Some(&impact))
                .into_iter()
                .map(|(n, t)| (n, t, false)),
        );
        for (n, via, on_chain) in next {
            if !seen.insert(n.clone()) {
                continue;
            }
            if !on_chain {
                visited.push(Visit {
                    revision: n.clone(),
                    depth: d + 1,
                    via: Some(via),
                });
            }
            queue.push_back((n, d + 1, on_chain));
        }
    }
    Ok(TraversalResult {
        origin: r.clone(),
        visited,
        direction: Direction::Incoming,
    })
}

/// Sources `r` was derived or created from, transitively, including `r`.
pub fn provenance_summary(
    graph: &Graph,
    r: &RevisionRef,
    depth: u32,
) -> Result<TraversalResult, TraversalError> {
    let opts = TraverseOptions::new(Direction::Outgoing, depth).edges(PROVENANCE_EDGES);
    traverse(graph, r, &opts)
}

fn kind_color(kind: &str) -> &'static str {
    const PALETTE: [&str; 8] = [
        "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
    ];
    match kind {
        "conversation" => "#8dd3c7",
        "decision" => "#fb8072",
        "fact" => "#80b1d3",
        "preference" => "#fdb462",
        "bundle" => "#b3de69",
        other => {
            let h = other.bytes().fold(0usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize));
            PALETTE[h % PALETTE.len()]
        }
    }
}

fn edge_color(t: EdgeType) -> &'static str {
    match t {
        EdgeType::DependsOn => "#d62728",
        EdgeType::DerivedFrom => "#1f77b4",
        EdgeType::Supersedes => "#7f7f7f",
        EdgeType::Referenced => "#2ca02c",
        EdgeType::Contains => "#9467bd",
        EdgeType::CreatedFrom => "#ff7f0e",
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn write_dot(
    graph: &Graph,
    nodes: &BTreeMap<(String, u32), RevisionRef>,
    edges: &[(RevisionRef, EdgeType, RevisionRef)],
) -> String {
    let mut out = String::from("digraph memory {\n  rankdir=LR;\n  node [shape=box, style=filled];\n");
    for r in nodes.values() {
        let label = graph
            .revision(r)
            .map(|rev| rev.summary().chars().take(40).collect::<String>())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\\n{}\", fillcolor=\"{}\"];",
            dot_escape(&r.to_string()),
            dot_escape(&format!("{}.{} r{}", r.item.item_name(), r.item.kind(), r.seq)),
            dot_escape(&label),
            kind_color(r.item.kind()),
        );
    }
    for (s, t, d) in edges {
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}\", color=\"{}\"];",
            dot_escape(&s.to_string()),
            dot_escape(&d.to_string()),
            t.as_str(),
            edge_color(*t),
        );
    }
    out.push_str("}\n");
    out
}

/// DOT rendering of a traversal: its revisions and the edges between them.
pub fn traversal_to_dot(graph: &Graph, res: &TraversalResult) -> String {
    let mut nodes: BTreeMap<(String, u32), RevisionRef> = res
        .visited
        .iter()
        .map(|v| (order_key(&v.revision), v.revision.clone()))
        .collect();
    nodes.insert(order_key(&res.origin), res.origin.clone());
    let members: HashSet<&RevisionRef> = nodes.values().collect();
    let edges: Vec<_> = graph
        .edges()
        .iter()
        .filter(|e| members.contains(&e.source) && members.contains(&e.target))
        .map(|e| (e.source.clone(), e.edge_type, e.target.clone()))
        .collect();
    write_dot(graph, &nodes, &edges)
}

/// DOT rendering of every revision and edge in the graph.
pub fn graph_to_dot(graph: &Graph) -> String {
    let nodes = graph
        .all_revisions()
        .map(|r| {
            let rr = r.reference();
            (order_key(&rr), rr)
        })
        .collect();
    let edges: Vec<_> = graph
        .edges()
        .iter()
        .map(|e| (e.source.clone(), e.edge_type, e.target.clone()))
        .collect();
    write_dot(graph, &nodes, &edges)
}
