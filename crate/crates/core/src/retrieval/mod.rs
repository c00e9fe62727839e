//! Hybrid retrieval: BM25 fulltext with distance-1 fuzzy expansion, an
//! optional embedding branch, and weighted max fusion.
//!
//! The index is a projection of the graph. [`SearchIndex::sync`] consumes
//! new `revision.created` events and new artifact pointers; visibility
//! (tag binding, deprecation, time) is always read from the graph at query
//! time so the index never needs to be told about tag moves.

pub mod embed;
pub mod text;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::kref::Kref;
use crate::store::{EventKind, EventSubject, Graph, Revision, RevisionRef, LATEST_TAG};

pub use embed::{cosine, EmbeddingProvider, HashedEmbedder, DEFAULT_HASHED_DIMENSION};
pub use text::{compose_search_text, tokenize};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_BETA: f64 = 0.85;
pub const DEFAULT_SIBLING_THRESHOLD: f64 = 0.30;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("no embedding provider configured")]
    NoProvider,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchType {
    Item,
    Revision,
    Artifact,
}

impl MatchType {
    pub fn weight(self) -> f64 {
        match self {
            MatchType::Item => 1.0,
            MatchType::Revision => 0.9,
            MatchType::Artifact => 0.8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatchType::Item => "item",
            MatchType::Revision => "revision",
            MatchType::Artifact => "artifact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Fulltext,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Fulltext,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    #[serde(rename = "kref")]
    pub target: Kref,
    pub score: f64,
    pub match_type: MatchType,
    pub branch: Branch,
    pub search_mode: SearchMode,
}

/// A candidate before the top-k cut, with both branch scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub target: Kref,
    pub fulltext: Option<f64>,
    pub vector: Option<f64>,
    pub match_type: MatchType,
    pub score: f64,
}

impl Candidate {
    pub fn branch(&self) -> Branch {
        match (self.fulltext, self.vector) {
            (Some(f), Some(v)) if v > f => Branch::Vector,
            (None, Some(_)) => Branch::Vector,
            _ => Branch::Fulltext,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub k: usize,
    pub include_deprecated: bool,
    pub at: Option<Timestamp>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            k: 10,
            include_deprecated: false,
            at: None,
        }
    }
}

impl SearchOptions {
    pub fn top(k: usize) -> Self {
        SearchOptions {
            k,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Posting {
    doc: u32,
    tf: u32,
    /// The term is one of the item-name tokens of this document.
    on_name: bool,
}

struct FulltextHits {
    score: Vec<f64>,
    on_name: Vec<bool>,
    touched: Vec<u32>,
}

/// A scored document before it is turned into a [`Candidate`].
struct Scored {
    doc: u32,
    fulltext: Option<f64>,
    vector: Option<f64>,
    match_type: MatchType,
    score: f64,
}

#[derive(Debug, Clone)]
pub struct IndexDoc {
    pub target: RevisionRef,
    /// Set for artifact documents, whose text is the artifact name alone.
    pub artifact: Option<String>,
    pub search_text: String,
    pub tokens: Vec<String>,
    name_tokens: BTreeSet<String>,
    item_text: String,
    item_idx: usize,
}

impl IndexDoc {
    pub fn target_kref(&self) -> Kref {
        let k = self.target.kref();
        match &self.artifact {
            Some(a) => k.with_artifact(a).expect("artifact names are validated by the store"),
            None => k,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchIndex {
    k1: f64,
    b: f64,
    beta: f64,
    provider: Option<Arc<dyn EmbeddingProvider>>,
    docs: Vec<IndexDoc>,
    doc_len: Vec<u32>,
    total_len: u64,
    postings: HashMap<String, Vec<Posting>>,
    terms_by_len: HashMap<usize, Vec<String>>,
    /// Stored embedding of each document with its norm.
    embeddings: Vec<Option<(Arc<[f32]>, f64)>>,
    revision_docs: HashMap<RevisionRef, u32>,
    events_seen: usize,
    artifacts_seen: usize,
}

impl Default for SearchIndex {
    fn default() -> Self {
        SearchIndex::new()
    }
}

fn sort_key_cmp(a: &IndexDoc, b: &IndexDoc) -> std::cmp::Ordering {
    a.item_text
        .cmp(&b.item_text)
        .then(a.target.seq.cmp(&b.target.seq))
        .then_with(|| a.artifact.cmp(&b.artifact))
}

impl SearchIndex {
    pub fn new() -> Self {
        SearchIndex {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            beta: DEFAULT_BETA,
            provider: None,
            docs: Vec::new(),
            doc_len: Vec::new(),
            total_len: 0,
            postings: HashMap::new(),
            terms_by_len: HashMap::new(),
            embeddings: Vec::new(),
            revision_docs: HashMap::new(),
            events_seen: 0,
            artifacts_seen: 0,
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn EmbeddingProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn with_bm25(mut self, k1: f64, b: f64) -> Self {
        self.k1 = k1;
        self.b = b;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn provider(&self) -> Option<&Arc<dyn EmbeddingProvider>> {
        self.provider.as_ref()
    }

    pub fn search_mode(&self) -> SearchMode {
        if self.provider.is_some() {
            SearchMode::Hybrid
        } else {
            SearchMode::Fulltext
        }
    }

    pub fn docs(&self) -> &[IndexDoc] {
        &self.docs
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn average_doc_len(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.docs.len() as f64
        }
    }

    /// Builds a fresh index over everything currently in the graph.
    pub fn build(graph: &Graph) -> Self {
        let mut idx = SearchIndex::new();
        idx.sync(graph);
        idx
    }

    /// Indexes revisions and artifacts added since the previous sync, and
    /// picks up embeddings that were filled in since.
    pub fn sync(&mut self, graph: &Graph) {
        let events = graph.events();
        for ev in &events[self.events_seen.min(events.len())..] {
            if ev.kind == EventKind::RevisionCreated {
                if let EventSubject::Revision(r) = &ev.subject {
                    if let Ok(rev) = graph.revision(r) {
                        self.index_revision(graph, rev);
                    }
                }
            }
        }
        self.events_seen = events.len();
        let artifacts = graph.artifacts();
        for a in &artifacts[self.artifacts_seen.min(artifacts.len())..] {
            let target = a.revision();
            let Some(item_idx) = graph.item_index(&target.item) else {
                continue;
            };
            self.push_doc(IndexDoc {
                item_text: target.item.to_string(),
                target,
                artifact: Some(a.name.clone()),
                search_text: a.name.clone(),
                tokens: tokenize(&a.name),
                name_tokens: BTreeSet::new(),
                item_idx,
            });
        }
        self.artifacts_seen = artifacts.len();
        if self.provider.is_some() {
            for (d, doc) in self.docs.iter().enumerate() {
                if doc.artifact.is_none() && self.embeddings[d].is_none() {
                    if let Some(e) = graph.revision(&doc.target).ok().and_then(Revision::embedding) {
                        self.embeddings[d] = Some((Arc::from(e), embed::norm(e)));
                    }
                }
            }
        }
    }

    /// Adds one revision as a document. Re-indexing the same revision is a
    /// no-op.
    pub fn index_revision(&mut self, graph: &Graph, rev: &Revision) -> Option<&IndexDoc> {
        let target = rev.reference();
        if let Some(&d) = self.revision_docs.get(&target) {
            return Some(&self.docs[d as usize]);
        }
        let item_idx = graph.item_index(rev.item())?;
        let d = self.push_doc(IndexDoc {
            item_text: rev.item().to_string(),
            name_tokens: tokenize(rev.item().item_name()).into_iter().collect(),
            tokens: tokenize(rev.search_text()),
            search_text: rev.search_text().to_string(),
            artifact: None,
            target: target.clone(),
            item_idx,
        });
        self.embeddings[d as usize] = rev.embedding().map(|e| (Arc::from(e), embed::norm(e)));
        self.revision_docs.insert(target, d);
        Some(&self.docs[d as usize])
    }

    fn push_doc(&mut self, doc: IndexDoc) -> u32 {
        let d = self.docs.len() as u32;
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &doc.tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        let mut terms: Vec<(&str, u32)> = tf.into_iter().collect();
        terms.sort_unstable();
        for (term, n) in terms {
            let on_name = doc.name_tokens.contains(term);
            let list = self.postings.entry(term.to_string()).or_insert_with(|| {
                self.terms_by_len
                    .entry(term.chars().count())
                    .or_default()
                    .push(term.to_string());
                Vec::new()
            });
            list.push(Posting {
                doc: d,
                tf: n,
                on_name,
            });
        }
        self.doc_len.push(doc.tokens.len() as u32);
        self.total_len += doc.tokens.len() as u64;
        self.docs.push(doc);
        self.embeddings.push(None);
        d
    }

    /// Dictionary terms a query term matches: itself, plus every term within
    /// edit distance one when the query term is longer than two characters.
    pub fn expand_term(&self, term: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        if let Some((t, _)) = self.postings.get_key_value(term) {
            out.push(t.as_str());
        }
        let len = term.chars().count();
        if len > 2 {
            for l in len - 1..=len + 1 {
                for t in self.terms_by_len.get(&l).into_iter().flatten() {
                    if t != term && text::within_one_edit(term, t) {
                        out.push(t.as_str());
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, Vec::len) as f64;
        let big_n = self.docs.len() as f64;
        (1.0 + (big_n - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc: u32) -> f64 {
        let tf = f64::from(tf);
        let dl = f64::from(self.doc_len[doc as usize]);
        let norm = 1.0 - self.b + self.b * dl / self.average_doc_len();
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    fn query_terms(query: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        tokenize(query)
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }

    /// Fulltext scores of every document matching the query, indexed by
    /// document, with a flag telling whether any match landed on the item
    /// name. A document matched iff its score is positive.
    fn fulltext_hits(&self, query: &str) -> FulltextHits {
        let n = self.docs.len();
        let mut hits = FulltextHits {
            score: vec![0.0; n],
            on_name: vec![false; n],
            touched: Vec::new(),
        };
        let mut best = vec![0.0f64; n];
        let mut term_docs: Vec<u32> = Vec::new();
        for q in Self::query_terms(query) {
            for t in self.expand_term(&q) {
                let idf = self.idf(t);
                for p in &self.postings[t] {
                    let d = p.doc as usize;
                    let w = self.term_weight(idf, p.tf, p.doc);
                    if best[d] == 0.0 {
                        term_docs.push(p.doc);
                    }
                    if w > best[d] {
                        best[d] = w;
                    }
                    hits.on_name[d] |= p.on_name;
                }
            }
            for d in term_docs.drain(..) {
                let d = d as usize;
                if hits.score[d] == 0.0 {
                    hits.touched.push(d as u32);
                }
                hits.score[d] += best[d];
                best[d] = 0.0;
            }
        }
        hits
    }

    /// BM25 score of `query` against the document for revision `r` (zero if
    /// it is not indexed or nothing matches).
    pub fn fulltext_score(&self, query: &str, r: &RevisionRef) -> f64 {
        let Some(&d) = self.revision_docs.get(r) else {
            return 0.0;
        };
        let mut total = 0.0;
        for q in Self::query_terms(query) {
            let mut best = 0.0f64;
            for t in self.expand_term(&q) {
                let list = &self.postings[t];
                if let Ok(i) = list.binary_search_by_key(&d, |p| p.doc) {
                    best = best.max(self.term_weight(self.idf(t), list[i].tf, d));
                }
            }
            total += best;
        }
        total
    }

    /// Calibrated cosine between the query embedding and the stored
    /// embedding of `r`. `None` when there is no provider or no embedding.
    pub fn vector_score(&self, query: &str, r: &RevisionRef) -> Option<f64> {
        let provider = self.provider.as_ref()?;
        let d = *self.revision_docs.get(r)?;
        let (e, en) = self.embeddings[d as usize].as_ref()?;
        let q = provider.embed(query);
        Some(self.beta * embed::cosine_with_norms(&q, embed::norm(&q), e, *en))
    }

    fn visibility<'g>(&self, graph: &'g Graph, opts: &SearchOptions) -> Visibility<'g> {
        let bound_at = opts.at.map(|t| {
            graph
                .bindings_at(t)
                .into_iter()
                .filter_map(|(_, r)| graph.item_index(&r.item).map(|i| (i, r.seq)))
                .collect()
        });
        Visibility {
            graph,
            include_deprecated: opts.include_deprecated,
            at: opts.at,
            bound_at,
        }
    }

    /// Every candidate that survives visibility filtering, scored and in
    /// final order. No top-k cut is applied.
    pub fn candidates(&self, graph: &Graph, query: &str, opts: &SearchOptions) -> Vec<Candidate> {
        let mut scored = self.score_all(graph, query, opts);
        scored.sort_by(|a, b| self.rank(a, b));
        scored.iter().map(|s| self.candidate(s)).collect()
    }

    fn rank(&self, a: &Scored, b: &Scored) -> std::cmp::Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| sort_key_cmp(&self.docs[a.doc as usize], &self.docs[b.doc as usize]))
    }

    fn candidate(&self, s: &Scored) -> Candidate {
        Candidate {
            target: self.docs[s.doc as usize].target_kref(),
            fulltext: s.fulltext,
            vector: s.vector,
            match_type: s.match_type,
            score: s.score,
        }
    }

    fn scored(&self, d: u32, fulltext: Option<f64>, vector: Option<f64>, on_name: bool) -> Scored {
        let match_type = if self.docs[d as usize].artifact.is_some() {
            MatchType::Artifact
        } else if on_name {
            MatchType::Item
        } else {
            MatchType::Revision
        };
        let best = fulltext.unwrap_or(0.0).max(vector.unwrap_or(0.0));
        Scored {
            doc: d,
            fulltext,
            vector,
            match_type,
            score: match_type.weight() * best,
        }
    }

    fn score_all(&self, graph: &Graph, query: &str, opts: &SearchOptions) -> Vec<Scored> {
        let vis = self.visibility(graph, opts);
        let mut hits = self.fulltext_hits(query);
        let mut out = Vec::new();
        if let Some(provider) = &self.provider {
            let q = provider.embed(query);
            let qn = embed::norm(&q);
            for (d, e) in self.embeddings.iter().enumerate() {
                let Some((e, en)) = e else { continue };
                let c = embed::cosine_with_norms(&q, qn, e, *en);
                if c > 0.0 && vis.allows(&self.docs[d]) {
                    let ft = std::mem::take(&mut hits.score[d]);
                    let ft = (ft > 0.0).then_some(ft);
                    out.push(self.scored(d as u32, ft, Some(self.beta * c), hits.on_name[d]));
                }
            }
        }
        for &d in &hits.touched {
            let s = hits.score[d as usize];
            if s > 0.0 && vis.allows(&self.docs[d as usize]) {
                out.push(self.scored(d, Some(s), None, hits.on_name[d as usize]));
            }
        }
        out
    }

    pub fn search(
        &self,
        graph: &Graph,
        query: &str,
        opts: &SearchOptions,
    ) -> Result<Vec<SearchResult>, SearchError> {
        if opts.k == 0 {
            return Err(SearchError::InvalidK);
        }
        let mut scored = self.score_all(graph, query, opts);
        if scored.len() > opts.k {
            scored.select_nth_unstable_by(opts.k - 1, |a, b| self.rank(a, b));
            scored.truncate(opts.k);
        }
        scored.sort_by(|a, b| self.rank(a, b));
        let mode = self.search_mode();
        Ok(scored
            .iter()
            .map(|s| {
                let c = self.candidate(s);
                SearchResult {
                    branch: c.branch(),
                    target: c.target,
                    score: c.score,
                    match_type: c.match_type,
                    search_mode: mode,
                }
            })
            .collect())
    }

    /// Keeps siblings whose cosine to the query reaches `threshold`, in input
    /// order. The revision currently bound to `latest` on its item is always
    /// kept. Siblings without a stored embedding are embedded on the fly.
    pub fn sibling_filter<'r>(
        &self,
        graph: &Graph,
        query: &str,
        siblings: &[&'r Revision],
        threshold: f64,
    ) -> Result<Vec<&'r Revision>, SearchError> {
        let provider = self.provider.as_ref().ok_or(SearchError::NoProvider)?;
        let q = provider.embed(query);
        Ok(siblings
            .iter()
            .copied()
            .filter(|rev| {
                if graph.tag_target(rev.item(), LATEST_TAG).as_ref() == Some(&rev.reference()) {
                    return true;
                }
                let c = match rev.embedding() {
                    Some(e) => cosine(&q, e),
                    None => cosine(&q, &provider.embed(rev.search_text())),
                };
                c >= threshold
            })
            .collect())
    }
}

struct Visibility<'g> {
    graph: &'g Graph,
    include_deprecated: bool,
    at: Option<Timestamp>,
    bound_at: Option<HashSet<(usize, u32)>>,
}

impl Visibility<'_> {
    /// Default surface: tag-bound revisions of non-deprecated items, at `at`
    /// when given. With `include_deprecated` the whole graph is visible (up
    /// to `at`), including revisions no tag points at.
    fn allows(&self, doc: &IndexDoc) -> bool {
        let seq = doc.target.seq;
        if self.include_deprecated {
            return match self.at {
                Some(t) => self
                    .graph
                    .revision_at(doc.item_idx, seq)
                    .is_some_and(|r| r.created_at() <= t),
                None => true,
            };
        }
        if self.graph.item_at(doc.item_idx).deprecated {
            return false;
        }
        match &self.bound_at {
            Some(set) => set.contains(&(doc.item_idx, seq)),
            None => self.graph.is_bound_at_index(doc.item_idx, seq),
        }
    }
}

impl fmt::Display for SearchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.4}  {}  [{}]",
            self.score,
            self.target,
            self.match_type.as_str()
        )
    }
}
