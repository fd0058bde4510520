//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::eval::{evaluate, load_gold, report_csv};
use crate::export::{export_trajectory, ExportFormat};
use crate::indexer::{index_repository, load_store, IndexOptions};
use crate::orchestrator::{run_episode, EpisodeTrajectory, RunOptions};
use crate::search::{parse_query, rerank, SearchIndex};
use crate::config::RunConfigFile;

#[derive(Debug, Parser)]
#[command(name = "codenav", version, about = "Search, run and score code-use agent episodes")]
pub struct Cli {
    /// Log LLM requests and responses (credentials are never logged).
    #[arg(long, global = true)]
    pub debug: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a repository into an index store.
    Index {
        root: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long = "include")]
        include: Vec<String>,
        #[arg(long = "exclude")]
        exclude: Vec<String>,
    },
    /// Run a query against an index store and print ranked hits.
    Search {
        index: PathBuf,
        query: String,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Run episodes from a config file.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// JSONL file of {"query_id", "query"}; one episode per line, each in its own subdirectory.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        query: Option<String>,
        /// Write 0 for every duration so output is reproducible.
        #[arg(long)]
        zero_durations: bool,
    },
    /// Score trajectories against gold call sets. Each path is one run.
    Eval {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a trajectory as HTML or markdown.
    Export {
        trajectory: PathBuf,
        #[arg(long, default_value = "html")]
        format: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Deserialize)]
struct QueryLine {
    query_id: String,
    query: String,
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.debug { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Index { root, output, include, exclude } => {
            let mut opts = IndexOptions::default();
            if !include.is_empty() {
                opts.include_globs = include;
            }
            opts.exclude_globs = exclude;
            let manifest = index_repository(&root, &opts, &output).map_err(anyhow::Error::from)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
            Ok(())
        }
        Command::Search { index, query, limit } => {
            let (_, docs) = load_store(&index).map_err(anyhow::Error::from)?;
            let index = SearchIndex::new(docs);
            let ast = parse_query(&query).map_err(|e| CliError::Usage(e.to_string()))?;
            let results = index.search(&ast, limit.max(1));
            println!("{} matches", results.total_matches);
            for (rank, hit) in rerank(results.hits).iter().enumerate() {
                let doc = index.get(&hit.doc_id).expect("hits come from the index");
                let label = if doc.prototype.is_empty() {
                    doc.text.lines().next().unwrap_or("").to_string()
                } else {
                    doc.prototype.clone()
                };
                println!(
                    "{:>3}. [{}] {}:{}-{} score={:.4} {}",
                    rank + 1,
                    doc.snippet_type,
                    doc.file_path,
                    doc.start_line,
                    doc.end_line,
                    hit.score,
                    label
                );
            }
            Ok(())
        }
        Command::Run { config, output, queries, parallel, max_steps, index, query, zero_durations } => {
            let mut cfg = RunConfigFile::load(&config).map_err(|e| CliError::Usage(format!("--config: {e:#}")))?;
            if let Some(n) = max_steps {
                cfg.max_steps = n;
            }
            if let Some(i) = index {
                cfg.index = i;
            }
            if let Some(q) = query {
                cfg.query = Some(q);
                cfg.query_file = None;
            }
            cfg.validate().map_err(|e| CliError::Usage(format!("{e:#}")))?;
            if parallel == 0 {
                return Err(CliError::Usage("--parallel must be at least 1".into()));
            }
            let jobs = match &queries {
                Some(path) => read_queries(path)?,
                None => {
                    let q = cfg
                        .query_text()?
                        .ok_or_else(|| CliError::Usage("no query: set query or query_file, or pass --queries".into()))?;
                    vec![QueryLine { query_id: cfg.query_id.clone(), query: q }]
                }
            };
            let per_query_dirs = queries.is_some();
            let summaries = run_many(&cfg, &jobs, &output, per_query_dirs, parallel, zero_durations)?;
            for (id, t) in summaries {
                let id = if id.is_empty() { "-".to_string() } else { id };
                println!("{id}: {:?} after {} steps", t.termination, t.records.len());
            }
            Ok(())
        }
        Command::Eval { runs, gold, output, csv } => {
            if !gold.is_file() {
                return Err(CliError::Usage(format!("--gold: file not found: {}", gold.display())));
            }
            let gold = load_gold(&gold).map_err(|e| CliError::Usage(format!("--gold: {e:#}")))?;
            let report = evaluate(&runs, &gold)?;
            write_file(&output, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
            if let Some(csv) = csv {
                write_file(&csv, &report_csv(&report))?;
            }
            if let Some(agg) = &report.aggregate {
                println!(
                    "f1 {:.1} ± {:.1} over {} run(s)",
                    100.0 * agg.f1.mean,
                    100.0 * agg.f1.plus_minus,
                    agg.f1.run_count
                );
            }
            for s in &report.skipped {
                eprintln!("skipped {s}");
            }
            Ok(())
        }
        Command::Export { trajectory, format, output } => {
            let format: ExportFormat = format.parse().map_err(|e: String| CliError::Usage(format!("--format: {e}")))?;
            let doc = export_trajectory(&trajectory, format)?;
            write_file(&output, &doc)?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_queries(path: &Path) -> Result<Vec<QueryLine>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("--queries: {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let q: QueryLine = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("--queries: line {}: {e}", i + 1)))?;
        if q.query_id.is_empty() || q.query_id.contains(['/', '\\']) || q.query_id.starts_with('.') {
            return Err(CliError::Usage(format!("--queries: line {}: query_id must be a plain name", i + 1)));
        }
        if !seen.insert(q.query_id.clone()) {
            return Err(CliError::Usage(format!("--queries: duplicate query_id `{}`", q.query_id)));
        }
        out.push(q);
    }
    Ok(out)
}

/// Run each query as an independent episode on up to `parallel` worker threads.
fn run_many(
    cfg: &RunConfigFile,
    jobs: &[QueryLine],
    output: &Path,
    per_query_dirs: bool,
    parallel: usize,
    zero_durations: bool,
) -> anyhow::Result<Vec<(String, EpisodeTrajectory)>> {
    let index = cfg.load_index()?;
    let summarizer = cfg.summarizer()?;
    let system = cfg.system_prompt()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, anyhow::Result<EpisodeTrajectory>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..parallel.min(jobs.len()).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let out_dir = if per_query_dirs { output.join(&job.query_id) } else { output.to_path_buf() };
                let result = (|| {
                    let config = cfg.episode_config(&job.query_id, &job.query)?;
                    let envs = cfg.environments(Arc::clone(&index), Arc::clone(&summarizer))?;
                    let mut agent = cfg.agent()?;
                    let opts = RunOptions { out_dir: Some(out_dir), zero_durations };
                    run_episode(config, &system, agent.as_mut(), envs, &opts)
                })();
                results.lock().unwrap().push((i, result));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    results
        .into_iter()
        .map(|(i, r)| r.map(|t| (jobs[i].query_id.clone(), t)).with_context(|| format!("query `{}`", jobs[i].query_id)))
        .collect()
}
