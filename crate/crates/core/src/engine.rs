//! The embeddable front door: a shared graph, a search index kept in step
//! with it, one-call ingestion and fire-and-forget embedding.
//!
//! Embeddings are computed on a background thread. A revision is searchable
//! by fulltext as soon as `ingest` returns; it joins the vector branch once
//! the worker has filled in its embedding. `flush` waits for the queue to
//! drain, which tests and the CLI use before saving.

use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;

use thiserror::Error;

use crate::belief::{self, BeliefError};
use crate::kref::{is_token, Kref, KrefError};
use crate::retrieval::{EmbeddingProvider, SearchError, SearchIndex, SearchOptions, SearchResult};
use crate::store::{
    BeliefAtom, EdgeType, Graph, Metadata, NewRevision, Predicate, RevisionRef, StoreError,
    META_KEYWORDS, META_TOPICS,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kref(#[from] KrefError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// Everything needed to store one memory in a single call.
#[derive(Debug, Clone, Default)]
pub struct IngestRequest {
    pub project: String,
    pub space: Vec<String>,
    pub title: String,
    pub kind: String,
    pub summary: String,
    /// Extra tags bound to the new revision besides `latest`.
    pub tags: Vec<String>,
    pub topics: Vec<String>,
    pub keywords: Vec<String>,
    pub metadata: Metadata,
    pub embedding_text: Option<String>,
    /// Sources this memory was derived from; unpinned krefs use `latest`.
    pub derived_from: Vec<Kref>,
    /// `(name, location)` of an external artifact.
    pub artifact: Option<(String, String)>,
    pub author: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub item: Kref,
    pub revision: RevisionRef,
    /// True when the item already existed and this call revised it.
    pub revised: bool,
}

/// Lower-cases a title and folds every run of non-token characters into `-`.
pub fn slugify(title: &str) -> String {
    let mut out = String::new();
    for c in title.trim().chars() {
        if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_matches(|c| c == '-' || c == '.').replace('.', "-")
}

#[derive(Debug, Default)]
struct Pending {
    count: Mutex<usize>,
    idle: Condvar,
}

impl Pending {
    fn add(&self) {
        *self.count.lock().expect("pending lock poisoned") += 1;
    }

    fn done(&self) {
        let mut n = self.count.lock().expect("pending lock poisoned");
        *n -= 1;
        if *n == 0 {
            self.idle.notify_all();
        }
    }

    fn wait(&self) {
        let mut n = self.count.lock().expect("pending lock poisoned");
        while *n > 0 {
            n = self.idle.wait(n).expect("pending lock poisoned");
        }
    }
}

struct Worker {
    tx: Option<Sender<(RevisionRef, String)>>,
    handle: Option<JoinHandle<()>>,
    pending: Arc<Pending>,
}

impl Worker {
    fn spawn(graph: Arc<Mutex<Graph>>, provider: Arc<dyn EmbeddingProvider>) -> Self {
        let (tx, rx) = channel::<(RevisionRef, String)>();
        let pending = Arc::new(Pending::default());
        let p = pending.clone();
        let handle = std::thread::spawn(move || {
            for (r, text) in rx {
                let e = provider.embed(&text);
                let res = graph.lock().expect("graph lock poisoned").set_embedding(&r, e);
                if let Err(err) = res {
                    tracing::debug!(revision = %r, error = %err, "embedding not stored");
                }
                p.done();
            }
        });
        Worker {
            tx: Some(tx),
            handle: Some(handle),
            pending,
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub struct Engine {
    graph: Arc<Mutex<Graph>>,
    index: Mutex<SearchIndex>,
    worker: Option<Worker>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("embeddings", &self.worker.is_some())
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Wraps `graph`. With a provider, new revisions are embedded in the
    /// background and the vector branch is enabled.
    pub fn new(graph: Graph, provider: Option<Arc<dyn EmbeddingProvider>>) -> Self {
        let mut index = SearchIndex::new();
        if let Some(p) = &provider {
            index = index.with_provider(p.clone());
        }
        index.sync(&graph);
        let graph = Arc::new(Mutex::new(graph));
        let worker = provider.map(|p| Worker::spawn(graph.clone(), p));
        Engine {
            graph,
            index: Mutex::new(index),
            worker,
        }
    }

    pub fn graph(&self) -> MutexGuard<'_, Graph> {
        self.graph.lock().expect("graph lock poisoned")
    }

    /// Queues every revision that has no embedding yet.
    pub fn backfill_embeddings(&self) -> usize {
        let jobs: Vec<(RevisionRef, String)> = self
            .graph()
            .all_revisions()
            .filter(|r| r.embedding().is_none())
            .map(|r| (r.reference(), r.search_text().to_string()))
            .collect();
        let n = jobs.len();
        for (r, text) in jobs {
            self.schedule(r, text);
        }
        n
    }

    fn schedule(&self, r: RevisionRef, text: String) {
        let Some(w) = &self.worker else { return };
        let Some(tx) = &w.tx else { return };
        w.pending.add();
        if tx.send((r, text)).is_err() {
            w.pending.done();
        }
    }

    /// Blocks until every scheduled embedding has been stored.
    pub fn flush(&self) {
        if let Some(w) = &self.worker {
            w.pending.wait();
        }
    }

    /// Stores a complete memory: item (created on first use), a revision
    /// whose atoms are the summary plus topics and keywords, extra tags,
    /// DERIVED_FROM edges, an optional artifact and a scheduled embedding.
    /// Ingesting the same title again takes the revision path.
    pub fn ingest(&self, req: &IngestRequest) -> Result<IngestOutcome, EngineError> {
        if req.title.trim().is_empty() {
            return Err(EngineError::Invalid("title must not be empty".into()));
        }
        if req.summary.trim().is_empty() {
            return Err(EngineError::Invalid("summary must not be empty".into()));
        }
        let name = slugify(&req.title);
        if name.is_empty() {
            return Err(EngineError::Invalid(format!(
                "title `{}` has no usable characters",
                req.title
            )));
        }
        let item = Kref::new(&req.project, &req.space, &name, &req.kind)?;
        for t in &req.tags {
            if !is_token(t) {
                return Err(EngineError::Invalid(format!("invalid tag `{t}`")));
            }
        }

        let mut g = self.graph();
        // Resolve sources before mutating anything.
        let sources = req
            .derived_from
            .iter()
            .map(|k| g.resolve(k, None, true).map(|r| r.reference()))
            .collect::<Result<Vec<_>, _>>()?;

        let revised = g.contains_item(&item);
        if !revised {
            g.create_item(&item, Metadata::new())?;
        }
        let mut atoms = vec![BeliefAtom::summary(&item, req.summary.trim())];
        atoms.extend(req.topics.iter().map(|t| BeliefAtom::new(&item, Predicate::Topic, t)));
        atoms.extend(req.keywords.iter().map(|k| BeliefAtom::new(&item, Predicate::Keyword, k)));
        let mut new = NewRevision::new(req.summary.trim())
            .content(atoms)
            .metadata(req.metadata.clone());
        if !req.topics.is_empty() {
            new = new.meta(META_TOPICS, req.topics.join(", "));
        }
        if !req.keywords.is_empty() {
            new = new.meta(META_KEYWORDS, req.keywords.join(", "));
        }
        if let Some(t) = &req.embedding_text {
            new = new.embedding_text(t.clone());
        }
        if let Some(a) = &req.author {
            new = new.author(a.clone());
        }
        let revision = belief::revise(&mut g, &item, new)?;
        for tag in &req.tags {
            let at = g.now();
            g.bind_tag(&item, tag, revision.seq, at)?;
        }
        for s in &sources {
            g.add_edge(&revision, EdgeType::DerivedFrom, s, Metadata::new())?;
        }
        if let Some((name, location)) = &req.artifact {
            g.add_artifact(&revision, name, location, None)?;
        }
        let text = g.revision(&revision)?.search_text().to_string();
        drop(g);
        self.schedule(revision.clone(), text);
        Ok(IngestOutcome {
            item,
            revision,
            revised,
        })
    }

    pub fn recall(&self, query: &str, opts: &SearchOptions) -> Result<Vec<SearchResult>, EngineError> {
        let g = self.graph();
        let mut index = self.index.lock().expect("index lock poisoned");
        index.sync(&g);
        Ok(index.search(&g, query, opts)?)
    }

    /// Waits for pending embeddings and hands the graph back.
    pub fn into_graph(self) -> Graph {
        self.flush();
        let Engine { graph, worker, .. } = self;
        // Joining the worker releases its handle on the graph.
        drop(worker);
        match Arc::try_unwrap(graph) {
            Ok(m) => m.into_inner().expect("graph lock poisoned"),
            Err(_) => unreachable!("the embedding worker was joined"),
        }
    }
}
