//! The search environment an agent talks to.
//!
//! Each search pulls up to `M` matches, re-ranks them, drops anything already
//! expanded earlier in the episode, and expands the next `K`. Up to `P` further
//! definitions are listed as one-line prototypes. Prototypes are not recorded
//! as surfaced, so they can still be expanded by a later search.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{parse_query, rerank, QuerySyntaxError, SearchIndex};
use crate::snippet::{snippet_prototype, SnippetDocument};

pub const SUMMARY_CACHE_FILE: &str = "summaries.jsonl";
pub const TRUNCATION_MARKER: &str = "...[truncated]";
pub const MIN_RESPONSE_BUDGET: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalLimits {
    /// M: matches pulled from the index per search.
    pub max_matches: usize,
    /// K: matches shown in full.
    pub expanded: usize,
    /// P: additional matches listed as prototypes.
    pub prototypes: usize,
}

impl Default for RetrievalLimits {
    fn default() -> Self {
        RetrievalLimits {
            max_matches: 100,
            expanded: 3,
            prototypes: 10,
        }
    }
}

/// Per-episode record of what has been shown.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalMemory {
    surfaced: BTreeSet<String>,
    cursors: HashMap<String, usize>,
}

impl RetrievalMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_surfaced(&self, doc_id: &str) -> bool {
        self.surfaced.contains(doc_id)
    }

    pub fn surfaced_ids(&self) -> &BTreeSet<String> {
        &self.surfaced
    }

    /// Rank offset just past the last match expanded for `raw_query`.
    pub fn cursor(&self, raw_query: &str) -> usize {
        self.cursors.get(raw_query).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rendering {
    Code,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedMatch {
    pub doc: SnippetDocument,
    pub rendering: Rendering,
    /// Present when `rendering` is `Summary`.
    pub summary: Option<String>,
}

impl ExpandedMatch {
    pub fn body(&self) -> &str {
        match (self.rendering, &self.summary) {
            (Rendering::Summary, Some(s)) => s,
            _ => &self.doc.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResponse {
    pub raw_query: String,
    pub total_matches: usize,
    pub expanded: Vec<ExpandedMatch>,
    pub prototypes: Vec<String>,
    pub exhausted: bool,
}

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("summarizer failed: {0}")]
    Failed(String),
}

/// Produces `prototype + docstring` text for a definition.
pub trait Summarizer: Send + Sync {
    fn id(&self) -> &str;
    fn summarize(&self, doc: &SnippetDocument) -> Result<String, SummaryError>;
}

/// Prototype plus the definition's own leading docstring, if any.
#[derive(Debug, Clone, Copy, Default)]
pub struct DocstringSummarizer;

impl Summarizer for DocstringSummarizer {
    fn id(&self) -> &str {
        "docstring/1"
    }

    fn summarize(&self, doc: &SnippetDocument) -> Result<String, SummaryError> {
        Ok(match leading_docstring(&doc.text) {
            Some(docstring) => format!("{}\n{}", doc.prototype, docstring),
            None => doc.prototype.clone(),
        })
    }
}

/// The docstring block following a definition header, re-indented by four spaces.
pub fn leading_docstring(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let def_line = lines.iter().position(|l| {
        let t = l.trim_start();
        t.starts_with("def ") || t.starts_with("async def ") || t.starts_with("class ")
    })?;

    // Header ends at the first `:` outside brackets.
    let mut depth = 0i32;
    let mut header_end = None;
    'outer: for (i, line) in lines.iter().enumerate().skip(def_line) {
        for c in line.chars() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                ':' if depth == 0 => {
                    header_end = Some(i);
                    break 'outer;
                }
                '#' => break,
                _ => {}
            }
        }
    }
    let header_end = header_end?;
    let first = (header_end + 1..lines.len()).find(|&i| !lines[i].trim().is_empty())?;
    let opening = lines[first].trim_start();
    let body = opening.trim_start_matches(['r', 'R', 'u', 'U', 'b', 'B']);
    let quote = ["\"\"\"", "'''", "\"", "'"].into_iter().find(|q| body.starts_with(q))?;

    let mut last = first;
    if quote.len() == 3 {
        let rest = &body[3..];
        if !rest.contains(quote) {
            last = (first + 1..lines.len()).find(|&i| lines[i].contains(quote))?;
        }
    }
    let indent = lines[first].len() - opening.len();
    let block = lines[first..=last]
        .iter()
        .map(|l| {
            if l.trim().is_empty() {
                return String::new();
            }
            let strip = l.len() - l.trim_start().len();
            format!("    {}", &l[strip.min(indent)..])
        })
        .collect::<Vec<_>>()
        .join("\n");
    Some(block)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedSummary {
    doc_id: String,
    summarizer_id: String,
    summary: String,
}

/// Caches another summarizer's output in memory and in a `summaries.jsonl` sidecar.
pub struct CachedSummarizer {
    inner: Arc<dyn Summarizer>,
    path: Option<PathBuf>,
    cache: Mutex<HashMap<(String, String), String>>,
}

impl CachedSummarizer {
    pub fn in_memory(inner: Arc<dyn Summarizer>) -> Self {
        CachedSummarizer {
            inner,
            path: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Load (or start) the sidecar cache in `index_dir`.
    pub fn with_sidecar(inner: Arc<dyn Summarizer>, index_dir: &Path) -> std::io::Result<Self> {
        let path = index_dir.join(SUMMARY_CACHE_FILE);
        let mut cache = HashMap::new();
        if path.exists() {
            for line in fs::read_to_string(&path)?.lines() {
                if let Ok(entry) = serde_json::from_str::<CachedSummary>(line) {
                    cache.insert((entry.doc_id, entry.summarizer_id), entry.summary);
                }
            }
        }
        Ok(CachedSummarizer {
            inner,
            path: Some(path),
            cache: Mutex::new(cache),
        })
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl Summarizer for CachedSummarizer {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn summarize(&self, doc: &SnippetDocument) -> Result<String, SummaryError> {
        let key = (doc.id.clone(), self.inner.id().to_string());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let summary = self.inner.summarize(doc)?;
        let mut cache = self.cache.lock().unwrap();
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&CachedSummary {
                doc_id: key.0.clone(),
                summarizer_id: key.1.clone(),
                summary: summary.clone(),
            })
            .expect("summary serializes");
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| SummaryError::Failed(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| SummaryError::Failed(e.to_string()))?;
        }
        cache.insert(key, summary.clone());
        Ok(summary)
    }
}

/// Choose between full code and `prototype + docstring`, whichever is shorter.
pub fn summarize_snippet(doc: &SnippetDocument, summarizer: &dyn Summarizer) -> (Rendering, Option<String>) {
    if !doc.snippet_type.is_definition() {
        return (Rendering::Code, None);
    }
    match summarizer.summarize(doc) {
        Ok(summary) if summary.chars().count() < doc.text.chars().count() => {
            (Rendering::Summary, Some(summary))
        }
        _ => (Rendering::Code, None),
    }
}

/// Run one search action against the index and advance the episode memory.
pub fn handle_search(
    raw_query: &str,
    memory: &mut RetrievalMemory,
    index: &SearchIndex,
    limits: &RetrievalLimits,
    summarizer: &dyn Summarizer,
) -> Result<RetrievalResponse, QuerySyntaxError> {
    let ast = parse_query(raw_query)?;
    let results = index.search(&ast, limits.max_matches.max(1));
    let ranked = rerank(results.hits);

    let fresh: Vec<(usize, &str)> = ranked
        .iter()
        .enumerate()
        .filter(|(_, h)| !memory.surfaced.contains(&h.doc_id))
        .map(|(rank, h)| (rank, h.doc_id.as_str()))
        .collect();
    let take = fresh.len().min(limits.expanded);

    let mut expanded = Vec::with_capacity(take);
    for &(_, id) in &fresh[..take] {
        let doc = index.get(id).expect("hit ids come from the index").clone();
        let (rendering, summary) = summarize_snippet(&doc, summarizer);
        expanded.push(ExpandedMatch {
            doc,
            rendering,
            summary,
        });
    }
    let prototypes: Vec<String> = fresh[take..]
        .iter()
        .filter_map(|&(_, id)| index.get(id).and_then(|d| snippet_prototype(d).ok()))
        .take(limits.prototypes)
        .collect();

    for m in &expanded {
        memory.surfaced.insert(m.doc.id.clone());
    }
    let cursor = match fresh.get(take) {
        Some(&(rank, _)) => rank,
        None => ranked.len(),
    };
    memory.cursors.insert(raw_query.to_string(), cursor);

    Ok(RetrievalResponse {
        raw_query: raw_query.to_string(),
        total_matches: results.total_matches,
        exhausted: fresh.len() == take,
        expanded,
        prototypes,
    })
}

/// Render a retrieval response, keeping the output within `char_budget` characters.
///
/// Prototypes are dropped first (last to first), then expanded bodies are cut
/// from the last match backwards.
pub fn format_retrieval_response(resp: &RetrievalResponse, char_budget: usize) -> String {
    let budget = char_budget.max(MIN_RESPONSE_BUDGET);
    let mut bodies: Vec<String> = resp.expanded.iter().map(|m| m.body().to_string()).collect();
    let mut proto_count = resp.prototypes.len();

    let mut out = render_retrieval(resp, &bodies, proto_count);
    while out.chars().count() > budget && proto_count > 0 {
        proto_count -= 1;
        out = render_retrieval(resp, &bodies, proto_count);
    }
    for i in (0..bodies.len()).rev() {
        let len = out.chars().count();
        if len <= budget {
            break;
        }
        let overflow = len - budget;
        let body_len = bodies[i].chars().count();
        let suffix = format!("\n{TRUNCATION_MARKER}");
        let suffix_len = suffix.chars().count();
        bodies[i] = if body_len > overflow + suffix_len {
            let kept: String = bodies[i].chars().take(body_len - overflow - suffix_len).collect();
            format!("{kept}{suffix}")
        } else {
            TRUNCATION_MARKER.to_string()
        };
        out = render_retrieval(resp, &bodies, proto_count);
    }
    if out.chars().count() > budget {
        out = out.chars().take(budget).collect();
    }
    out
}

fn render_retrieval(resp: &RetrievalResponse, bodies: &[String], proto_count: usize) -> String {
    let mut out = String::new();
    if resp.total_matches == 0 {
        out.push_str("Found 0 matches.");
        return out;
    }
    out.push_str(&format!("Found {} matches.", resp.total_matches));
    if resp.expanded.is_empty() {
        out.push_str(" All of them were already shown by earlier searches.");
        return out;
    }
    for (m, body) in resp.expanded.iter().zip(bodies) {
        out.push_str(&format!(
            "\n\npath={} lines=[{},{}] type={}\n```python\n{}\n```",
            m.doc.file_path, m.doc.start_line, m.doc.end_line, m.doc.snippet_type, body
        ));
    }
    if proto_count > 0 {
        out.push_str("\n\nPrototypes for other matches:");
        for p in &resp.prototypes[..proto_count] {
            out.push('\n');
            out.push_str(p);
        }
    }
    out
}

/// A search environment bound to one episode.
pub struct RetrievalEnv {
    index: Arc<SearchIndex>,
    limits: RetrievalLimits,
    summarizer: Arc<dyn Summarizer>,
    memory: RetrievalMemory,
}

impl RetrievalEnv {
    pub fn new(index: Arc<SearchIndex>, limits: RetrievalLimits, summarizer: Arc<dyn Summarizer>) -> Self {
        RetrievalEnv {
            index,
            limits,
            summarizer,
            memory: RetrievalMemory::new(),
        }
    }

    pub fn search(&mut self, raw_query: &str) -> Result<RetrievalResponse, QuerySyntaxError> {
        handle_search(
            raw_query,
            &mut self.memory,
            &self.index,
            &self.limits,
            self.summarizer.as_ref(),
        )
    }

    pub fn memory(&self) -> &RetrievalMemory {
        &self.memory
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }
}
