//! Shared fixtures and brute-force oracles for the integration tests and
//! the acceptance harness. Nothing here calls into the scoring or traversal
//! code it is used to check.

#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use cogmem_core::clock::{logical, LogicalClock};
use cogmem_core::retrieval::embed::{EmbeddingProvider, HashedEmbedder};
use cogmem_core::store::{EdgeType, Metadata, NewRevision};
use cogmem_core::{Graph, Kref, RevisionRef};
use rand::seq::SliceRandom;
use rand::Rng;

pub const VOCAB: [&str; 40] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu", "color", "colour", "blue", "black",
    "palette", "warm", "cool", "tones", "design", "memory", "graph", "tag", "edge", "node",
];

pub fn graph() -> (Graph, Arc<LogicalClock>) {
    let clock = logical();
    (Graph::new(clock.clone()), clock)
}

pub fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A query of one to three vocabulary words, sometimes with a one-letter typo
/// or a word absent from every document.
pub fn query<R: Rng>(rng: &mut R) -> String {
    let mut q: Vec<String> = (0..rng.gen_range(1..=3))
        .map(|_| VOCAB.choose(rng).unwrap().to_string())
        .collect();
    match rng.gen_range(0..6) {
        0 => {
            let w = &mut q[0];
            let i = rng.gen_range(0..w.len());
            w.replace_range(i..=i, "q");
        }
        1 => q.push("zzyzx".into()),
        _ => {}
    }
    q.join(" ")
}

/// Adds `n` single-item documents named `{prefix}{i}`. Roughly one in four
/// gets a second revision, which moves `latest` off the first. Embeddings
/// are the hashed embedding of the search text.
pub fn add_corpus<R: Rng>(g: &mut Graph, rng: &mut R, prefix: &str, n: usize) -> Vec<Kref> {
    let embedder = HashedEmbedder::default();
    let mut items = Vec::new();
    for i in 0..n {
        let k = Kref::parse(&format!("kref://corpus/docs/{prefix}{i:03}.note")).unwrap();
        g.create_item(&k, Metadata::new()).unwrap();
        let revisions = if rng.gen_bool(0.25) { 2 } else { 1 };
        for _ in 0..revisions {
            let new = NewRevision::new(words(rng, 3, 12)).meta("keywords", words(rng, 0, 2));
            let r = g.create_revision(&k, new).unwrap().reference();
            let text = g.revision(&r).unwrap().search_text().to_string();
            g.set_embedding(&r, embedder.embed(&text)).unwrap();
        }
        items.push(k);
    }
    items
}

// ---- BM25 oracle -------------------------------------------------------

fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// Textbook BM25 over an explicit document list, with fuzzy expansion of
/// query terms longer than two characters to dictionary terms within one
/// edit, keeping the best expansion per document.
pub struct Bm25Oracle {
    docs: Vec<Vec<String>>,
    df: BTreeMap<String, usize>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

impl Bm25Oracle {
    pub fn new(texts: &[String]) -> Self {
        let docs: Vec<Vec<String>> = texts.iter().map(|t| oracle_tokens(t)).collect();
        let mut df = BTreeMap::new();
        for d in &docs {
            for t in d.iter().collect::<BTreeSet<_>>() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / docs.len() as f64;
        Bm25Oracle {
            docs,
            df,
            avgdl,
            k1: 1.2,
            b: 0.75,
        }
    }

    pub fn score(&self, query: &str, doc: usize) -> f64 {
        let n = self.docs.len() as f64;
        let dl = self.docs[doc].len() as f64;
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for q in oracle_tokens(query) {
            if !seen.insert(q.clone()) {
                continue;
            }
            let mut best = 0.0f64;
            for (t, &df) in &self.df {
                let close = *t == q || (q.chars().count() > 2 && levenshtein(&q, t) <= 1);
                if !close {
                    continue;
                }
                let tf = self.docs[doc].iter().filter(|x| *x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = df as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let w = idf * tf * (self.k1 + 1.0)
                    / (tf + self.k1 * (1.0 - self.b + self.b * dl / self.avgdl));
                best = best.max(w);
            }
            total += best;
        }
        total
    }
}

// ---- traversal oracle --------------------------------------------------

/// Hop distance from `origin` to every node reachable within `depth`, by
/// relaxing the whole edge list until nothing changes.
pub fn reach(
    edges: &[(RevisionRef, EdgeType, RevisionRef)],
    origin: &RevisionRef,
    depth: u32,
    outgoing: bool,
    incoming: bool,
    types: Option<&[EdgeType]>,
) -> BTreeMap<RevisionRef, u32> {
    let mut dist = BTreeMap::from([(origin.clone(), 0u32)]);
    loop {
        let mut changed = false;
        for (s, t, d) in edges {
            if types.is_some_and(|ts| !ts.contains(t)) {
                continue;
            }
            let mut hops = Vec::new();
            if outgoing {
                hops.push((s, d));
            }
            if incoming {
                hops.push((d, s));
            }
            for (from, to) in hops {
                let Some(&df) = dist.get(from) else { continue };
                if df >= depth {
                    continue;
                }
                if dist.get(to).is_none_or(|&dt| dt > df + 1) {
                    dist.insert(to.clone(), df + 1);
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

// ---- kref generation ---------------------------------------------------

const TOKEN_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-";

pub fn token<R: Rng>(rng: &mut R, allow_dot: bool) -> String {
    let len = rng.gen_range(1..=10);
    (0..len)
        .map(|_| loop {
            let c = TOKEN_CHARS[rng.gen_range(0..TOKEN_CHARS.len())] as char;
            if allow_dot || c != '.' {
                break c;
            }
        })
        .collect()
}

/// A canonical kref string plus an equivalent spelling with the query keys
/// in the other order when both are present.
pub fn kref_text<R: Rng>(rng: &mut R) -> (String, String) {
    let mut s = format!("kref://{}", token(rng, true));
    for _ in 0..rng.gen_range(1..=8) {
        s.push('/');
        s.push_str(&token(rng, true));
    }
    s.push('/');
    s.push_str(&token(rng, true));
    s.push('.');
    s.push_str(&token(rng, false));
    let r = rng.gen_bool(0.5).then(|| rng.gen_range(1..=u32::MAX));
    let a = rng.gen_bool(0.4).then(|| token(rng, true));
    let (canon, alt) = match (r, a) {
        (Some(r), Some(a)) => (format!("?r={r}&a={a}"), format!("?a={a}&r={r}")),
        (Some(r), None) => (format!("?r={r}"), format!("?r={r}")),
        (None, Some(a)) => (format!("?a={a}"), format!("?a={a}")),
        (None, None) => (String::new(), String::new()),
    };
    (format!("{s}{canon}"), format!("{s}{alt}"))
}

/// One example of every malformed class the parser must reject.
pub const MALFORMED: [&str; 27] = [
    "",
    "kref:/p/s/i.k",
    "http://p/s/i.k",
    "KREF://p/s/i.k",
    "kref://p/i.k",
    "kref://p/s/item",
    "kref://p/s/item.",
    "kref://p/s/.kind",
    "kref://p//i.k",
    "kref:///s/i.k",
    "kref://p/s/i.k/",
    "kref://p/s/i.k?",
    "kref://p/s/i.k?r=",
    "kref://p/s/i.k?r=abc",
    "kref://p/s/i.k?r=0",
    "kref://p/s/i.k?r=01",
    "kref://p/s/i.k?r=-1",
    "kref://p/s/i.k?r=99999999999",
    "kref://p/s/i.k?x=1",
    "kref://p/s/i.k?r=1&r=2",
    "kref://p/s/i.k?a=",
    "kref://p/s/i.k?a=x&a=y",
    "kref://p/s/i.k?r",
    "kref://p/s/i%20x.k",
    "kref://p/s p/i.k",
    "kref://p/s/i.k#frag",
    "kref://p/1/2/3/4/5/6/7/8/9/i.k",
];
