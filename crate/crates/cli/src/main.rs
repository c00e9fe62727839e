//! `cogmem`: command-line frontend for the memory engine.
//!
//! Every mutating command loads the graph snapshot under an advisory lock,
//! applies exactly one engine operation sequence and writes the snapshot
//! back. Exit codes: 0 success, 1 other failure, 2 validation error,
//! 3 not found, 4 finished but a safety guard tripped.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cogmem_core::agm_suite::{self, Filter, RunOptions};
use cogmem_core::belief::{self, BeliefError};
use cogmem_core::clock::{LogicalClock, SharedClock, SystemClock, Timestamp};
use cogmem_core::dream::{self, DreamError, DreamOptions, HttpAssessor, RuleAssessor};
use cogmem_core::engine::{Engine, EngineError, IngestRequest};
use cogmem_core::retrieval::{EmbeddingProvider, HashedEmbedder, SearchError, SearchOptions};
use cogmem_core::store::{
    export_events_jsonl, export_jsonl, import_jsonl, BeliefAtom, NewRevision, Predicate,
    StoreError, META_KEYWORDS, META_TOPICS,
};
use cogmem_core::traversal::{
    analyze_impact, graph_to_dot, provenance_summary, shortest_path, traversal_to_dot,
    TraversalError, DEFAULT_DEPTH,
};
use cogmem_core::{Graph, Kref, KrefError, RevisionRef};

#[derive(Parser, Debug)]
#[command(name = "cogmem", version, about = "Graph-native cognitive memory")]
struct Cli {
    /// Graph snapshot file; created on first write.
    #[arg(long, env = "COGMEM_GRAPH", default_value = "cogmem.graph", global = true)]
    graph: PathBuf,
    /// Project token used for new krefs and dream runs.
    #[arg(long, env = "COGMEM_PROJECT", default_value = "default", global = true)]
    project: String,
    #[arg(long, value_enum, env = "COGMEM_CLOCK", default_value_t = ClockKind::Real, global = true)]
    clock: ClockKind,
    #[arg(long, value_enum, default_value_t = EmbeddingKind::Hashed, global = true)]
    embedding: EmbeddingKind,
    #[arg(long, value_enum, default_value_t = Output::Text, global = true)]
    output: Output,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClockKind {
    Real,
    /// Deterministic ticks resuming after the newest stored timestamp.
    Logical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbeddingKind {
    Hashed,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Store a memory in one call; an existing title is revised.
    Ingest(IngestArgs),
    /// Hybrid search over the current belief surface.
    Recall {
        query: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        include_deprecated: bool,
        /// Search the graph as it was at this time (RFC 3339 or epoch ms).
        #[arg(long)]
        at: Option<String>,
    },
    /// Replace an item's content with a new revision that supersedes the old.
    Revise {
        item: String,
        #[arg(long)]
        summary: String,
        #[arg(long = "topic")]
        topics: Vec<String>,
        #[arg(long = "keyword")]
        keywords: Vec<String>,
    },
    /// Retract a belief: detag every revision holding it and deprecate.
    Contract {
        item: String,
        #[arg(long, default_value = "summary")]
        predicate: String,
        #[arg(long)]
        value: String,
    },
    /// Re-point a tag at an existing revision.
    Rollback {
        item: String,
        #[arg(long, default_value = "latest")]
        tag: String,
        #[arg(long)]
        to: u32,
    },
    /// Show an item or revision, or walk the graph from it.
    Inspect(InspectArgs),
    /// Run the consolidation pipeline.
    Dream(DreamArgs),
    /// Continue consolidation from the stored cursor.
    Resume(DreamArgs),
    /// Run the AGM compliance suite.
    AgmCheck {
        /// `P`, `C` or `P/C`, e.g. `K2/simple`.
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Export the graph.
    Export {
        #[arg(long, conflicts_with_all = ["jsonl", "events"])]
        dot: bool,
        #[arg(long, conflicts_with = "events")]
        jsonl: bool,
        #[arg(long)]
        events: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the graph file from a JSONL export.
    Import {
        file: PathBuf,
        /// Replace an existing graph file.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    title: String,
    #[arg(long)]
    summary: String,
    #[arg(long, default_value = "conversation")]
    kind: String,
    /// Space path, `/`-separated.
    #[arg(long, default_value = "memories")]
    space: String,
    #[arg(long = "tag")]
    tags: Vec<String>,
    #[arg(long = "topic")]
    topics: Vec<String>,
    #[arg(long = "keyword")]
    keywords: Vec<String>,
    #[arg(long = "derived-from")]
    derived_from: Vec<String>,
    /// `name=location` of an external artifact.
    #[arg(long)]
    artifact: Option<String>,
    #[arg(long)]
    embedding_text: Option<String>,
    /// Session id (`context:user_hash:YYYYMMDD:seq`) recorded in metadata.
    #[arg(long)]
    session: Option<String>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    target: String,
    #[arg(long, conflicts_with_all = ["provenance", "path"])]
    impact: bool,
    #[arg(long, conflicts_with = "path")]
    provenance: bool,
    /// Shortest path to this kref.
    #[arg(long)]
    path: Option<String>,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: u32,
    /// Print the traversal as Graphviz DOT.
    #[arg(long)]
    dot: bool,
}

#[derive(Args, Debug)]
struct DreamArgs {
    #[arg(long)]
    dry_run: bool,
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    #[arg(long)]
    allow_published: bool,
    /// Assess every kind, not only conversations.
    #[arg(long)]
    all_kinds: bool,
    /// Directory for Markdown reports; defaults to the graph's directory.
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

/// An error carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let err = e.into();
        Failure {
            code: classify(&err),
            err,
        }
    }
}

fn store_code(e: &StoreError) -> u8 {
    match e {
        StoreError::UnknownItem(_) | StoreError::UnknownRevision(_) | StoreError::NoRevision(_) => 3,
        StoreError::Io(_) | StoreError::CorruptSnapshot(_) => 1,
        _ => 2,
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<StoreError>() {
            return store_code(e);
        }
        if cause.is::<KrefError>() || cause.is::<SearchError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return match e {
                EngineError::Store(s) => store_code(s),
                EngineError::Belief(BeliefError::Store(s)) => store_code(s),
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<BeliefError>() {
            return match e {
                BeliefError::Store(s) => store_code(s),
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<DreamError>() {
            return match e {
                DreamError::Store(s) => store_code(s),
                DreamError::InvalidOptions(_) => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<TraversalError>() {
            return match e {
                TraversalError::UnknownRevision(_) => 3,
                _ => 2,
            };
        }
    }
    1
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        err: anyhow!(msg.into()),
    }
}

type Outcome = Result<u8, Failure>;

/// Holds the advisory lock for the lifetime of a command.
struct Session {
    path: PathBuf,
    graph: Graph,
    _lock: Option<File>,
}

fn make_clock(kind: ClockKind, after: Option<Timestamp>) -> SharedClock {
    match kind {
        ClockKind::Real => Arc::new(SystemClock),
        ClockKind::Logical => Arc::new(LogicalClock::starting_at(
            after.map_or(1, |t| t.millis() + 1),
        )),
    }
}

fn lock_path(graph: &Path) -> PathBuf {
    let mut name = graph.file_name().unwrap_or_default().to_os_string();
    name.push(".lock");
    graph.with_file_name(name)
}

fn open(cli: &Cli, write: bool) -> Result<Session, Failure> {
    let lock = if write {
        if let Some(dir) = cli.graph.parent().filter(|d| !d.as_os_str().is_empty()) {
            if !dir.is_dir() {
                return Err(invalid(format!("directory {} does not exist", dir.display())));
            }
        }
        let f = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(lock_path(&cli.graph))
            .context("opening lock file")?;
        f.lock().context("locking graph")?;
        Some(f)
    } else {
        None
    };
    let graph = if cli.graph.exists() {
        let mut g = Graph::load(&cli.graph, make_clock(ClockKind::Real, None))
            .with_context(|| format!("loading {}", cli.graph.display()))?;
        g.set_clock(make_clock(cli.clock, g.max_timestamp()));
        g
    } else {
        Graph::new(make_clock(cli.clock, None))
    };
    Ok(Session {
        path: cli.graph.clone(),
        graph,
        _lock: lock,
    })
}

impl Session {
    fn save(&self) -> Result<(), Failure> {
        self.graph
            .snapshot(&self.path)
            .with_context(|| format!("writing {}", self.path.display()))?;
        Ok(())
    }
}

fn provider(cli: &Cli) -> Option<Arc<dyn EmbeddingProvider>> {
    match cli.embedding {
        EmbeddingKind::Hashed => Some(Arc::new(HashedEmbedder::default())),
        EmbeddingKind::None => None,
    }
}

fn kref(s: &str) -> Result<Kref, Failure> {
    Ok(Kref::parse(s)?)
}

fn revision_of(g: &Graph, s: &str) -> Result<RevisionRef, Failure> {
    Ok(g.resolve(&kref(s)?, None, true)?.reference())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string(v).context("encoding JSON")?);
    Ok(())
}

fn cmd_ingest(cli: &Cli, a: &IngestArgs) -> Outcome {
    let Session { path, graph, _lock } = open(cli, true)?;
    let mut metadata = cogmem_core::store::Metadata::new();
    if let Some(sid) = &a.session {
        let sid: cogmem_core::session::SessionId = sid.parse()?;
        metadata.insert("session".into(), sid.to_string());
    }
    let artifact = match &a.artifact {
        Some(spec) => {
            let (n, l) = spec
                .split_once('=')
                .ok_or_else(|| invalid("--artifact expects name=location"))?;
            Some((n.to_string(), l.to_string()))
        }
        None => None,
    };
    let req = IngestRequest {
        project: cli.project.clone(),
        space: a.space.split('/').filter(|p| !p.is_empty()).map(str::to_string).collect(),
        title: a.title.clone(),
        kind: a.kind.clone(),
        summary: a.summary.clone(),
        tags: a.tags.clone(),
        topics: a.topics.clone(),
        keywords: a.keywords.clone(),
        metadata,
        embedding_text: a.embedding_text.clone(),
        derived_from: a.derived_from.iter().map(|k| kref(k)).collect::<Result<_, _>>()?,
        artifact,
        author: None,
    };
    let engine = Engine::new(graph, provider(cli));
    let out = engine.ingest(&req)?;
    let s = Session {
        path,
        graph: engine.into_graph(),
        _lock,
    };
    s.save()?;
    match cli.output {
        Output::Text => println!("{}", out.revision.kref()),
        Output::Jsonl => print_json(&serde_json::json!({
            "kref": out.revision.kref(),
            "item": out.item,
            "revised": out.revised,
        }))?,
    }
    Ok(0)
}

fn cmd_recall(cli: &Cli, query: &str, k: usize, include_deprecated: bool, at: Option<&str>) -> Outcome {
    let s = open(cli, false)?;
    let at = match at {
        Some(t) => Some(Timestamp::parse(t).ok_or_else(|| invalid(format!("bad time `{t}`")))?),
        None => None,
    };
    let opts = SearchOptions {
        k,
        include_deprecated,
        at,
    };
    let engine = Engine::new(s.graph, provider(cli));
    engine.backfill_embeddings();
    engine.flush();
    let hits = engine.recall(query, &opts)?;
    for h in &hits {
        match cli.output {
            Output::Jsonl => print_json(h)?,
            Output::Text => println!("{:.4}\t{}\t{}", h.score, h.match_type.as_str(), h.target),
        }
    }
    Ok(0)
}

fn atoms(item: &Kref, summary: &str, topics: &[String], keywords: &[String]) -> Vec<BeliefAtom> {
    let mut v = vec![BeliefAtom::summary(item, summary)];
    v.extend(topics.iter().map(|t| BeliefAtom::new(item, Predicate::Topic, t)));
    v.extend(keywords.iter().map(|k| BeliefAtom::new(item, Predicate::Keyword, k)));
    v
}

fn cmd_revise(cli: &Cli, item: &str, summary: &str, topics: &[String], keywords: &[String]) -> Outcome {
    let mut s = open(cli, true)?;
    let item = kref(item)?.item_ref();
    if summary.trim().is_empty() {
        return Err(invalid("summary must not be empty"));
    }
    let mut new = NewRevision::new(summary).content(atoms(&item, summary, topics, keywords));
    if !topics.is_empty() {
        new = new.meta(META_TOPICS, topics.join(", "));
    }
    if !keywords.is_empty() {
        new = new.meta(META_KEYWORDS, keywords.join(", "));
    }
    let r = belief::revise(&mut s.graph, &item, new)?;
    s.save()?;
    println!("{}", r.kref());
    Ok(0)
}

fn cmd_contract(cli: &Cli, item: &str, predicate: &str, value: &str) -> Outcome {
    let mut s = open(cli, true)?;
    let item = kref(item)?.item_ref();
    let p: Predicate = predicate.parse().map_err(invalid)?;
    let atom = BeliefAtom::new(&item, p, value);
    let at = s.graph.now();
    let out = belief::contract(&mut s.graph, &atom, at)?;
    s.save()?;
    match cli.output {
        Output::Jsonl => print_json(&serde_json::json!({
            "removed_tags": out.removed_tags,
            "deprecated_items": out.deprecated_items,
        }))?,
        Output::Text => {
            for (tag, r) in &out.removed_tags {
                println!("removed {tag} from {r}");
            }
            for k in &out.deprecated_items {
                println!("deprecated {k}");
            }
            if out.removed_tags.is_empty() {
                println!("nothing held {atom}");
            }
        }
    }
    Ok(0)
}

fn cmd_rollback(cli: &Cli, item: &str, tag: &str, to: u32) -> Outcome {
    let mut s = open(cli, true)?;
    let item = kref(item)?.item_ref();
    let at = s.graph.now();
    let entry = belief::rollback(&mut s.graph, &item, tag, to, at)?;
    s.save()?;
    println!("{} -> {}", entry.tag, entry.revision().kref());
    Ok(0)
}

fn cmd_inspect(cli: &Cli, a: &InspectArgs) -> Outcome {
    let s = open(cli, false)?;
    let g = &s.graph;
    let origin = revision_of(g, &a.target)?;
    if let Some(to) = &a.path {
        let to = revision_of(g, to)?;
        match shortest_path(g, &origin, &to)? {
            None => {
                println!("no path");
                return Ok(3);
            }
            Some(steps) => {
                println!("{}", origin.kref());
                for (r, e) in steps {
                    println!("  -[{e}]- {}", r.kref());
                }
            }
        }
        return Ok(0);
    }
    if a.impact || a.provenance {
        let res = if a.impact {
            analyze_impact(g, &origin, a.depth)?
        } else {
            provenance_summary(g, &origin, a.depth)?
        };
        if a.dot {
            print!("{}", traversal_to_dot(g, &res));
        } else if cli.output == Output::Jsonl {
            for v in &res.visited {
                print_json(&serde_json::json!({
                    "kref": v.revision.kref(),
                    "depth": v.depth,
                    "via": v.via,
                }))?;
            }
        } else {
            for v in &res.visited {
                let via = v.via.map(|e| e.to_string()).unwrap_or_default();
                println!("{}\t{}\t{}", v.depth, via, v.revision.kref());
            }
        }
        return Ok(0);
    }
    let item = g.item(&origin.item)?;
    let rev = g.revision(&origin)?;
    let tags = g.tags_on(&origin);
    let edges: Vec<_> = g
        .edges_from(&origin)
        .map(|e| format!("{} -> {}", e.edge_type, e.target.kref()))
        .chain(g.edges_to(&origin).map(|e| format!("{} <- {}", e.edge_type, e.source.kref())))
        .collect();
    if cli.output == Output::Jsonl {
        print_json(&serde_json::json!({
            "kref": origin.kref(),
            "deprecated": item.deprecated,
            "revisions": g.revisions_of(&origin.item)?.len(),
            "tags": tags,
            "summary": rev.summary(),
            "metadata": rev.metadata(),
            "content": rev.content(),
            "edges": edges,
            "created_at": rev.created_at().to_rfc3339(),
        }))?;
    } else {
        println!("{}", origin.kref());
        println!("  deprecated: {}", item.deprecated);
        println!("  revisions:  {}", g.revisions_of(&origin.item)?.len());
        println!("  tags:       {}", tags.join(", "));
        println!("  summary:    {}", rev.summary());
        for (k, v) in rev.metadata() {
            println!("  meta {k}: {v}");
        }
        for atom in rev.content() {
            println!("  atom {atom}");
        }
        for e in edges {
            println!("  edge {e}");
        }
    }
    Ok(0)
}

fn cmd_dream(cli: &Cli, a: &DreamArgs) -> Outcome {
    let mut s = open(cli, true)?;
    let dir = match &a.report_dir {
        Some(d) => d.clone(),
        None => cli
            .graph
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let opts = DreamOptions {
        dry_run: a.dry_run,
        max_deprecation_ratio: a.ratio,
        allow_published_deprecation: a.allow_published,
        batch_size: a.batch,
        kinds: if a.all_kinds {
            None
        } else {
            DreamOptions::default().kinds
        },
        report_location: Some(dir.join("dream-report-{cursor}.md").display().to_string()),
        interrupt: None,
    };
    opts.validate()?;
    let report = match HttpAssessor::from_env() {
        Some(h) => dream::run(&mut s.graph, &cli.project, &h, &opts),
        None => dream::run(&mut s.graph, &cli.project, &RuleAssessor, &opts),
    }?;
    let md = report.markdown();
    if a.dry_run {
        print!("{md}");
    } else {
        if let Some(loc) = &report.report_location {
            fs::write(loc, &md).with_context(|| format!("writing report {loc}"))?;
        }
        s.save()?;
        match cli.output {
            Output::Jsonl => print_json(&report)?,
            Output::Text => {
                println!("{}", dream::dream_item(&cli.project));
                if let Some(loc) = &report.report_location {
                    println!("report: {loc}");
                }
                println!(
                    "events {} | assessed {} | deprecated {} | cursor {}",
                    report.events_processed,
                    report.memories_assessed,
                    report.deprecated.len(),
                    report.new_cursor
                );
            }
        }
    }
    if report.circuit_breaker_tripped {
        eprintln!(
            "warning: deprecation circuit breaker tripped; {} deprecations capped",
            report.capped.len()
        );
        return Ok(4);
    }
    Ok(0)
}

fn cmd_agm(only: Option<&str>, json: bool) -> Outcome {
    let filter: Filter = match only {
        Some(f) => f.parse().map_err(invalid)?,
        None => Filter::default(),
    };
    let report = agm_suite::run_scenarios(
        &agm_suite::scenario_catalog(),
        &RunOptions {
            filter,
            ..Default::default()
        },
    );
    if report.total == 0 {
        return Err(invalid("filter selected no scenarios"));
    }
    if json {
        print_json(&report)?;
    } else {
        print!("{}", report.table());
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

fn cmd_export(cli: &Cli, dot: bool, jsonl: bool, events: bool, out: Option<&Path>) -> Outcome {
    let s = open(cli, false)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    if dot || !(jsonl || events) {
        sink.write_all(graph_to_dot(&s.graph).as_bytes())
            .context("writing DOT")?;
    } else if events {
        export_events_jsonl(&s.graph, &mut sink)?;
    } else {
        export_jsonl(&s.graph, &mut sink)?;
    }
    sink.flush().context("flushing export")?;
    Ok(0)
}

fn cmd_import(cli: &Cli, file: &Path, force: bool) -> Outcome {
    let s = open(cli, true)?;
    if s.path.exists() && !force {
        return Err(invalid(format!(
            "{} exists; pass --force to replace it",
            s.path.display()
        )));
    }
    let f = File::open(file).with_context(|| format!("opening {}", file.display()))?;
    let g = import_jsonl(BufReader::new(f), make_clock(ClockKind::Real, None))?;
    let session = Session {
        graph: g,
        path: s.path.clone(),
        _lock: None,
    };
    session.save()?;
    println!(
        "imported {} items, {} revisions",
        session.graph.item_count(),
        session.graph.revision_count()
    );
    Ok(0)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(cli, a),
        Command::Recall {
            query,
            k,
            include_deprecated,
            at,
        } => cmd_recall(cli, query, *k, *include_deprecated, at.as_deref()),
        Command::Revise {
            item,
            summary,
            topics,
            keywords,
        } => cmd_revise(cli, item, summary, topics, keywords),
        Command::Contract {
            item,
            predicate,
            value,
        } => cmd_contract(cli, item, predicate, value),
        Command::Rollback { item, tag, to } => cmd_rollback(cli, item, tag, *to),
        Command::Inspect(a) => cmd_inspect(cli, a),
        Command::Dream(a) | Command::Resume(a) => cmd_dream(cli, a),
        Command::AgmCheck { only, json } => cmd_agm(only.as_deref(), *json),
        Command::Export {
            dot,
            jsonl,
            events,
            out,
        } => cmd_export(cli, *dot, *jsonl, *events, out.as_deref()),
        Command::Import { file, force } => cmd_import(cli, file, *force),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("COGMEM_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    if !cogmem_core::kref::is_token(&cli.project) {
        eprintln!("error: invalid project `{}`", cli.project);
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
