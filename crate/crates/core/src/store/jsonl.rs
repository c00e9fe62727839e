//! JSON Lines exports.
//!
//! `export_events_jsonl` writes one event per line (`seq`, `kind`, `subject`,
//! `at`). `export_jsonl` writes the whole graph as tagged records and
//! `import_jsonl` reads it back into an identical graph.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    ArtifactPointer, Edge, Event, Graph, GraphData, Item, Result, Revision, StoreError,
    TagHistoryEntry,
};
use crate::clock::SharedClock;

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Space { path: String },
    Item(Item),
    Revision(Revision),
    Edge(Edge),
    Tag(TagHistoryEntry),
    Artifact(ArtifactPointer),
    Event(Event),
}

fn json_err(e: serde_json::Error) -> StoreError {
    StoreError::Io(std::io::Error::other(e))
}

pub fn export_events_jsonl<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    for ev in graph.events() {
        serde_json::to_writer(&mut out, ev).map_err(json_err)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn export_jsonl<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    let d = graph.data();
    let mut emit = |r: Record| -> Result<()> {
        serde_json::to_writer(&mut out, &r).map_err(json_err)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    for s in &d.spaces {
        emit(Record::Space { path: s.clone() })?;
    }
    for i in &d.items {
        emit(Record::Item(i.clone()))?;
    }
    for r in d.revisions.iter().flatten() {
        emit(Record::Revision(r.clone()))?;
    }
    for e in &d.edges {
        emit(Record::Edge(e.clone()))?;
    }
    for t in &d.tag_history {
        emit(Record::Tag(t.clone()))?;
    }
    for a in &d.artifacts {
        emit(Record::Artifact(a.clone()))?;
    }
    for e in &d.events {
        emit(Record::Event(e.clone()))?;
    }
    Ok(())
}

pub fn import_jsonl<R: BufRead>(input: R, clock: SharedClock) -> Result<Graph> {
    let mut d = GraphData::default();
    let mut positions = std::collections::HashMap::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| StoreError::CorruptSnapshot(format!("line {}: {e}", n + 1)))?;
        match rec {
            Record::Space { path } => {
                d.spaces.insert(path);
            }
            Record::Item(i) => {
                positions.insert(i.kref.clone(), d.items.len());
                d.items.push(i);
                d.revisions.push(Vec::new());
            }
            Record::Revision(r) => {
                let id = *positions.get(&r.item).ok_or_else(|| {
                    StoreError::CorruptSnapshot(format!("revision before item {}", r.item))
                })?;
                d.revisions[id].push(r);
            }
            Record::Edge(e) => d.edges.push(e),
            Record::Tag(t) => d.tag_history.push(t),
            Record::Artifact(a) => d.artifacts.push(a),
            Record::Event(e) => d.events.push(e),
        }
    }
    Graph::from_data(d, clock)
}
