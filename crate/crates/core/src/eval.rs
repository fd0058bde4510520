//! Tool-use metrics over finished episodes.
//!
//! Invoked names are pulled from the solution code and compared to gold name
//! multisets: matches = Σ min(pred(x), gold(x)), P = matches/|A| (0 when A is
//! empty), R = matches/|G|, F1 = 2PR/(P+R) (0 when P+R = 0). With several
//! golds the best F1 wins. Runs are summarised as mean ± 2 sample stddev.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{Node, Parser};

use crate::orchestrator::{load_trajectory, ActionType, META_FILE, TRAJECTORY_FILE};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("usage error: {0}")]
    Usage(String),
}

/// Name → count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CallMultiset(pub BTreeMap<String, usize>);

impl CallMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>) {
        *self.0.entry(name.into()).or_insert(0) += 1;
    }

    pub fn size(&self) -> usize {
        self.0.values().sum()
    }

    pub fn count(&self, name: &str) -> usize {
        self.0.get(name).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for CallMultiset {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut m = CallMultiset::new();
        for s in iter {
            m.add(s);
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallExtraction {
    pub calls: CallMultiset,
    /// Callees treated as class instantiations.
    pub instantiated: BTreeSet<String>,
    /// Set when the code did not parse and a token scan was used instead.
    pub warning: Option<String>,
}

fn is_class_like(name: &str, known_classes: Option<&BTreeSet<String>>) -> bool {
    match known_classes {
        Some(known) => known.contains(name),
        None => name.chars().next().is_some_and(char::is_uppercase),
    }
}

/// Count every call's final callee identifier (`f(..)` → f, `a.b.m(..)` → m).
pub fn extract_calls(code: &str) -> CallMultiset {
    extract_calls_detailed(code, None).calls
}

pub fn extract_calls_detailed(code: &str, known_classes: Option<&BTreeSet<String>>) -> CallExtraction {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .expect("python grammar loads");
    let mut out = CallExtraction::default();
    let tree = parser.parse(code, None);
    match tree {
        Some(tree) if !tree.root_node().has_error() => {
            collect_calls(tree.root_node(), code.as_bytes(), &mut out.calls);
        }
        _ => {
            out.warning = Some("code did not parse; used a token-level call scan".into());
            out.calls = scan_calls(code);
        }
    }
    out.instantiated = out
        .calls
        .0
        .keys()
        .filter(|n| is_class_like(n, known_classes))
        .cloned()
        .collect();
    out
}

fn collect_calls(node: Node, src: &[u8], out: &mut CallMultiset) {
    if node.kind() == "call" {
        if let Some(callee) = node.child_by_field_name("function") {
            let name_node = match callee.kind() {
                "identifier" => Some(callee),
                "attribute" => callee.child_by_field_name("attribute"),
                _ => None,
            };
            if let Some(n) = name_node.and_then(|n| n.utf8_text(src).ok()) {
                out.add(n);
            }
        }
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_calls(child, src, out);
    }
}

const NOT_CALLS: &[&str] = &[
    "if", "elif", "while", "for", "return", "and", "or", "not", "in", "is", "with", "assert", "yield", "lambda",
    "except", "print_function", "await", "del", "raise",
];

fn scan_calls(code: &str) -> CallMultiset {
    static CALL: OnceLock<Regex> = OnceLock::new();
    let re = CALL.get_or_init(|| Regex::new(r"(\bdef\s+|\bclass\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap());
    let mut out = CallMultiset::new();
    for cap in re.captures_iter(code) {
        if cap.get(1).is_some() {
            continue;
        }
        let name = &cap[2];
        if !NOT_CALLS.contains(&name) {
            out.add(name);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: usize,
    pub predicted_size: usize,
    pub gold_size: usize,
    pub steps: usize,
}

pub fn tool_prf(predicted: &CallMultiset, gold: &CallMultiset, steps: usize) -> PrfReport {
    let matches: usize = predicted
        .0
        .iter()
        .map(|(name, &n)| n.min(gold.count(name)))
        .sum();
    let predicted_size = predicted.size();
    let gold_size = gold.size();
    let precision = if predicted_size == 0 { 0.0 } else { matches as f64 / predicted_size as f64 };
    let recall = if gold_size == 0 { 0.0 } else { matches as f64 / gold_size as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    PrfReport { precision, recall, f1, matches, predicted_size, gold_size, steps }
}

/// Score against each gold and keep the best F1; ties go to higher recall, then the earlier gold.
pub fn best_match_f1(
    predicted: &CallMultiset,
    golds: &[CallMultiset],
    steps: usize,
) -> Result<(usize, PrfReport), EvalError> {
    let mut best: Option<(usize, PrfReport)> = None;
    for (i, gold) in golds.iter().enumerate() {
        let r = tool_prf(predicted, gold, steps);
        let better = match &best {
            None => true,
            Some((_, b)) => r.f1 > b.f1 || (r.f1 == b.f1 && r.recall > b.recall),
        };
        if better {
            best = Some((i, r));
        }
    }
    best.ok_or_else(|| EvalError::Usage("at least one gold call set is required".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub mean: f64,
    /// Two sample standard deviations.
    pub plus_minus: f64,
    pub run_count: usize,
}

pub fn aggregate_runs(per_run_means: &[f64]) -> Result<RunAggregate, EvalError> {
    let n = per_run_means.len();
    if n == 0 {
        return Err(EvalError::Usage("no runs to aggregate".into()));
    }
    let mean = per_run_means.iter().sum::<f64>() / n as f64;
    let plus_minus = if n == 1 {
        0.0
    } else {
        let var = per_run_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        2.0 * var.sqrt()
    };
    Ok(RunAggregate { mean, plus_minus, run_count: n })
}

pub fn macro_average(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// One entry of the gold file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub query_id: String,
    pub golds: Vec<Vec<String>>,
}

pub fn load_gold(path: &Path) -> anyhow::Result<BTreeMap<String, Vec<CallMultiset>>> {
    let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read gold file {}: {e}", path.display()))?;
    let entries: Vec<GoldEntry> =
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid gold file {}: {e}", path.display()))?;
    Ok(entries
        .into_iter()
        .map(|e| (e.query_id, e.golds.into_iter().map(CallMultiset::from_iter).collect()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub trajectory: String,
    pub best_gold: usize,
    pub predicted: CallMultiset,
    pub report: PrfReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: String,
    pub queries: Vec<QueryScore>,
    pub macro_scores: Option<MacroScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub precision: RunAggregate,
    pub recall: RunAggregate,
    pub f1: RunAggregate,
    pub steps: RunAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunReport>,
    pub aggregate: Option<AggregateScores>,
    /// Trajectories skipped, with the reason.
    pub skipped: Vec<String>,
}

/// Episode directories under `path`: itself if it holds a trajectory, else its direct subdirectories that do.
pub fn episode_dirs(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.join(TRAJECTORY_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(TRAJECTORY_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        anyhow::bail!("{} contains no {TRAJECTORY_FILE}", path.display());
    }
    Ok(dirs)
}

/// Solution code for an episode: the code summary, or all code actions when there is none.
fn solution_code(dir: &Path) -> anyhow::Result<(String, Option<String>, usize, Option<String>)> {
    let (meta, lines) = load_trajectory(dir)?;
    let steps = lines.len();
    let query_id = meta.as_ref().map(|m| m.config.query_id.clone()).filter(|q| !q.is_empty());
    if let Some(summary) = meta.as_ref().and_then(|m| m.final_code_summary.clone()) {
        return Ok((summary, query_id, steps, None));
    }
    let code: Vec<String> = lines
        .iter()
        .filter_map(|l| l.as_ref().ok())
        .filter_map(|r| r.valid_action())
        .filter(|a| a.action_type == ActionType::Code)
        .map(|a| a.content.clone())
        .collect();
    let warning = if meta.is_none() {
        Some(format!("{META_FILE} missing; scored code actions"))
    } else {
        Some("no code summary; scored all code actions".to_string())
    };
    Ok((code.join("\n"), query_id, steps, warning))
}

/// Score every run. Each entry of `runs` is one run: an episode directory or a directory of them.
pub fn evaluate(runs: &[PathBuf], gold: &BTreeMap<String, Vec<CallMultiset>>) -> anyhow::Result<EvalReport> {
    let mut report = EvalReport { runs: Vec::new(), aggregate: None, skipped: Vec::new() };
    for run in runs {
        let mut queries = Vec::new();
        for dir in episode_dirs(run)? {
            let (code, query_id, steps, mut warning) = solution_code(&dir)?;
            let query_id = query_id
                .unwrap_or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            let Some(golds) = gold.get(&query_id) else {
                report.skipped.push(format!("{}: no gold entry for query_id `{query_id}`", dir.display()));
                continue;
            };
            let extraction = extract_calls_detailed(&code, None);
            if let Some(w) = extraction.warning {
                warning = Some(match warning {
                    Some(prev) => format!("{prev}; {w}"),
                    None => w,
                });
            }
            let (best_gold, prf) = match best_match_f1(&extraction.calls, golds, steps) {
                Ok(r) => r,
                Err(e) => {
                    report.skipped.push(format!("{}: {e}", dir.display()));
                    continue;
                }
            };
            queries.push(QueryScore {
                query_id,
                trajectory: dir.display().to_string(),
                best_gold,
                predicted: extraction.calls,
                report: prf,
                warning,
            });
        }
        let col = |f: fn(&QueryScore) -> f64| queries.iter().map(f).collect::<Vec<_>>();
        let macro_scores = macro_average(&col(|q| q.report.f1)).map(|f1| MacroScores {
            precision: macro_average(&col(|q| q.report.precision)).unwrap(),
            recall: macro_average(&col(|q| q.report.recall)).unwrap(),
            f1,
            steps: macro_average(&col(|q| q.report.steps as f64)).unwrap(),
        });
        report.runs.push(RunReport { run: run.display().to_string(), queries, macro_scores });
    }
    let scored: Vec<&MacroScores> = report.runs.iter().filter_map(|r| r.macro_scores.as_ref()).collect();
    if !scored.is_empty() {
        let agg = |f: fn(&MacroScores) -> f64| aggregate_runs(&scored.iter().map(|m| f(m)).collect::<Vec<_>>()).unwrap();
        report.aggregate = Some(AggregateScores {
            precision: agg(|m| m.precision),
            recall: agg(|m| m.recall),
            f1: agg(|m| m.f1),
            steps: agg(|m| m.steps),
        });
    }
    Ok(report)
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("run,query_id,precision,recall,f1,matches,predicted_size,gold_size,steps\n");
    for run in &report.runs {
        for q in &run.queries {
            let r = &q.report;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                csv_field(&run.run),
                csv_field(&q.query_id),
                r.precision,
                r.recall,
                r.f1,
                r.matches,
                r.predicted_size,
                r.gold_size,
                r.steps
            ));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
