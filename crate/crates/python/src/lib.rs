//! Python bindings for codenav.
//!
//! Structured results cross the boundary as JSON and come out as plain
//! dicts and lists on the Python side.

use std::path::PathBuf;
use std::sync::Arc;

use codenav::eval::{self, CallMultiset};
use codenav::execution::{FakeKernel, KernelClient};
use codenav::export::{export_trajectory as export_dir, ExportFormat};
use codenav::indexer::{self, load_store, IndexOptions};
use codenav::llm::ScriptedAgent;
use codenav::orchestrator::{
    parse_and_validate_action, run_episode, ActionType, Environments, EpisodeConfig, ExecutionEnv, RunOptions,
    DEFAULT_SYSTEM_PROMPT,
};
use codenav::retrieval::{format_retrieval_response, DocstringSummarizer, RetrievalEnv, RetrievalLimits};
use codenav::search::{self, SearchIndex};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn runtime<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn multiset(names: Vec<String>) -> CallMultiset {
    names.into_iter().collect()
}

/// Parse a repository and write the index store to `out_dir`; returns the manifest.
#[pyfunction]
#[pyo3(signature = (root, out_dir, include=None, exclude=None))]
fn index_repository<'py>(
    py: Python<'py>,
    root: PathBuf,
    out_dir: PathBuf,
    include: Option<Vec<String>>,
    exclude: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut opts = IndexOptions::default();
    if let Some(inc) = include {
        opts.include_globs = inc;
    }
    opts.exclude_globs = exclude.unwrap_or_default();
    let manifest = indexer::index_repository(&root, &opts, &out_dir).map_err(runtime)?;
    to_py(py, &manifest)
}

/// Parse a query and return its canonical string form.
#[pyfunction]
fn parse_query(query: &str) -> PyResult<String> {
    search::parse_query(query).map(|ast| ast.to_string()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A loaded index store.
#[pyclass(module = "codenav", frozen)]
struct Index {
    inner: Arc<SearchIndex>,
}

#[pymethods]
impl Index {
    #[new]
    fn new(index_dir: PathBuf) -> PyResult<Self> {
        let (_, docs) = load_store(&index_dir).map_err(runtime)?;
        Ok(Index { inner: Arc::new(SearchIndex::new(docs)) })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Ranked hits (reranked by snippet tier) for a query string.
    #[pyo3(signature = (query, limit=10))]
    fn search<'py>(&self, py: Python<'py>, query: &str, limit: usize) -> PyResult<Bound<'py, PyAny>> {
        let ast = search::parse_query(query).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let hits = search::rerank(self.inner.search(&ast, limit.max(1)).hits);
        to_py(py, &hits)
    }

    /// The document with this id, or None.
    fn get<'py>(&self, py: Python<'py>, doc_id: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner.get(doc_id).map(|d| to_py(py, d)).transpose()
    }
}

/// Retrieval with per-session dedup memory, as an agent sees it.
#[pyclass(module = "codenav")]
struct RetrievalSession {
    env: RetrievalEnv,
}

#[pymethods]
impl RetrievalSession {
    #[new]
    #[pyo3(signature = (index, max_matches=100, expanded=5, prototypes=5))]
    fn new(index: &Index, max_matches: usize, expanded: usize, prototypes: usize) -> PyResult<Self> {
        if max_matches == 0 || expanded == 0 {
            return Err(PyValueError::new_err("max_matches and expanded must be positive"));
        }
        let limits = RetrievalLimits { max_matches, expanded, prototypes };
        Ok(RetrievalSession {
            env: RetrievalEnv::new(Arc::clone(&index.inner), limits, Arc::new(DocstringSummarizer)),
        })
    }

    /// Run one search action and return the formatted response text.
    #[pyo3(signature = (query, char_budget=8000))]
    fn search(&mut self, query: &str, char_budget: usize) -> PyResult<String> {
        let resp = self.env.search(query).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(format_retrieval_response(&resp, char_budget))
    }

    /// Ids surfaced so far in this session.
    fn surfaced(&self) -> Vec<String> {
        self.env.memory().surfaced_ids().iter().cloned().collect()
    }
}

/// Validate one raw agent output. Returns the action, or `{"rule", "violation"}`.
#[pyfunction]
#[pyo3(signature = (raw, registered=None))]
fn parse_action<'py>(py: Python<'py>, raw: &str, registered: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
    let types: Vec<ActionType> = match registered {
        None => ActionType::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<ActionType>().map_err(|e| PyValueError::new_err(e.to_string())))
            .collect::<PyResult<_>>()?,
    };
    match parse_and_validate_action(raw, &types) {
        Ok(action) => to_py(py, &action),
        Err(v) => to_py(py, &serde_json::json!({"rule": v.rule(), "violation": v.description()})),
    }
}

/// Invoked function and method names in a code string, with counts.
#[pyfunction]
fn extract_calls<'py>(py: Python<'py>, code: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &eval::extract_calls(code))
}

#[pyfunction]
#[pyo3(signature = (predicted, gold, steps=0))]
fn tool_prf<'py>(py: Python<'py>, predicted: Vec<String>, gold: Vec<String>, steps: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &eval::tool_prf(&multiset(predicted), &multiset(gold), steps))
}

/// Score against each gold set; returns `(index, report)` for the best one.
#[pyfunction]
#[pyo3(signature = (predicted, golds, steps=0))]
fn best_match_f1<'py>(
    py: Python<'py>,
    predicted: Vec<String>,
    golds: Vec<Vec<String>>,
    steps: usize,
) -> PyResult<(usize, Bound<'py, PyAny>)> {
    let golds: Vec<CallMultiset> = golds.into_iter().map(multiset).collect();
    let (i, r) = eval::best_match_f1(&multiset(predicted), &golds, steps).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((i, to_py(py, &r)?))
}

/// Mean and two sample standard deviations over per-run scores.
#[pyfunction]
fn aggregate_runs<'py>(py: Python<'py>, per_run: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let agg = eval::aggregate_runs(&per_run).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &agg)
}

#[pyfunction]
fn truncate_middle(text: &str, max_chars: usize) -> String {
    codenav::execution::truncate_middle(text, max_chars)
}

/// Render a persisted episode directory as "html" or "md".
#[pyfunction]
#[pyo3(signature = (trajectory_dir, format="html"))]
fn export_trajectory(trajectory_dir: PathBuf, format: &str) -> PyResult<String> {
    let format: ExportFormat = format.parse().map_err(PyValueError::new_err)?;
    export_dir(&trajectory_dir, format).map_err(runtime)
}

/// Run a scripted episode over an index with the in-process kernel.
#[pyfunction]
#[pyo3(signature = (index, query, script, library_description="", max_steps=20, out_dir=None))]
fn run_scripted_episode<'py>(
    py: Python<'py>,
    index: &Index,
    query: &str,
    script: Vec<String>,
    library_description: &str,
    max_steps: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = EpisodeConfig {
        query: query.to_string(),
        library_description: library_description.to_string(),
        max_steps,
        ..EpisodeConfig::default()
    };
    let mut kernel: ExecutionEnv = KernelClient::new(Box::new(FakeKernel::new()));
    kernel.connect().map_err(PyRuntimeError::new_err)?;
    let envs = Environments {
        retrieval: Some(RetrievalEnv::new(Arc::clone(&index.inner), config.retrieval, Arc::new(DocstringSummarizer))),
        execution: Some(kernel),
    };
    let mut agent = ScriptedAgent::new(script);
    let opts = RunOptions { out_dir, zero_durations: false };
    let traj = run_episode(config, DEFAULT_SYSTEM_PROMPT, &mut agent, envs, &opts).map_err(runtime)?;
    to_py(py, &traj)
}

/// Run the command-line interface with `args` (without the program name); returns the exit code.
#[pyfunction]
fn main(args: Vec<String>) -> i32 {
    codenav::cli::main_with_args(std::iter::once("codenav".to_string()).chain(args))
}

#[pymodule]
#[pyo3(name = "codenav")]
fn codenav_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Index>()?;
    m.add_class::<RetrievalSession>()?;
    m.add_function(wrap_pyfunction!(index_repository, m)?)?;
    m.add_function(wrap_pyfunction!(parse_query, m)?)?;
    m.add_function(wrap_pyfunction!(parse_action, m)?)?;
    m.add_function(wrap_pyfunction!(extract_calls, m)?)?;
    m.add_function(wrap_pyfunction!(tool_prf, m)?)?;
    m.add_function(wrap_pyfunction!(best_match_f1, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_runs, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_middle, m)?)?;
    m.add_function(wrap_pyfunction!(export_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted_episode, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
