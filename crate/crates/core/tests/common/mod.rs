//! Shared fixtures, oracles and generators for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use codenav::indexer::{build_index, parse_source, IndexOptions};
use codenav::orchestrator::ActionType;
use codenav::search::{Field, QueryAst, SearchIndex};
use codenav::{SnippetDocument, SnippetType};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn fixture_repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/repo")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Set `CODENAV_BLESS=1` to rewrite golden files from the current output.
pub fn blessing() -> bool {
    std::env::var_os("CODENAV_BLESS").is_some_and(|v| v == "1")
}

pub fn fixture_docs() -> Vec<SnippetDocument> {
    build_index(&fixture_repo(), &IndexOptions::default()).expect("fixture repo indexes").1
}

pub fn fixture_index() -> Arc<SearchIndex> {
    Arc::new(SearchIndex::new(fixture_docs()))
}

// ---------------------------------------------------------------------------
// Synthetic corpus

const WORDS: &[&str] = &[
    "image", "detect", "object", "box", "label", "score", "text", "summary", "audio", "speech", "page",
    "browser", "flight", "hotel", "budget", "cipher", "key", "sequence", "codon", "model", "loader",
    "cache", "server", "vision", "token", "mask", "frame", "query", "result", "count",
];
const ACRONYMS: &[&str] = &["HTTP", "OCR", "URL", "DNA", "RGB"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).unwrap()
}

fn snake<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=3);
    let mut parts: Vec<String> = (0..n).map(|_| pick(rng, WORDS).to_string()).collect();
    if rng.gen_bool(0.15) {
        parts.push(rng.gen_range(1..10).to_string());
    }
    parts.join("_")
}

fn camel<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=3);
    let mut out = String::new();
    if rng.gen_bool(0.3) {
        out.push_str(pick(rng, ACRONYMS));
    }
    for _ in 0..n {
        let w = pick(rng, WORDS);
        out.push_str(&w[..1].to_uppercase());
        out.push_str(&w[1..]);
    }
    out
}

fn synthetic_module<R: Rng>(rng: &mut R) -> String {
    let mut src = String::new();
    for _ in 0..rng.gen_range(1..=3) {
        if rng.gen_bool(0.5) {
            src.push_str(&format!("import {}\n", snake(rng)));
        } else {
            src.push_str(&format!("from {}.{} import {}\n", snake(rng), snake(rng), camel(rng)));
        }
    }
    src.push('\n');
    for _ in 0..rng.gen_range(1..=3) {
        src.push_str(&format!("{} = {}\n", snake(rng).to_uppercase(), rng.gen_range(0..1000)));
    }
    for _ in 0..rng.gen_range(2..=5) {
        if rng.gen_bool(0.6) {
            let name = snake(rng);
            let arg = snake(rng);
            src.push_str(&format!("\n\ndef {name}({arg}, {}=None):\n", snake(rng)));
            if rng.gen_bool(0.5) {
                src.push_str(&format!("    \"\"\"{} the {} of a {}.\"\"\"\n", pick(rng, WORDS), pick(rng, WORDS), camel(rng)));
            }
            src.push_str(&format!("    {} = {}({arg})\n", snake(rng), camel(rng)));
            src.push_str(&format!("    return {arg}\n"));
        } else {
            let name = camel(rng);
            src.push_str(&format!("\n\nclass {name}({}):\n", camel(rng)));
            src.push_str(&format!("    \"\"\"A {} {}.\"\"\"\n", pick(rng, WORDS), pick(rng, WORDS)));
            for _ in 0..rng.gen_range(1..=3) {
                let m = snake(rng);
                src.push_str(&format!("\n    def {m}(self, {}):\n        return self.{}\n", snake(rng), snake(rng)));
            }
        }
    }
    if rng.gen_bool(0.3) {
        src.push_str(&format!("\n\nif __name__ == \"__main__\":\n    {}()\n", snake(rng)));
    }
    src
}

/// Fixture documents plus seeded synthetic modules (one of them unparseable).
pub fn oracle_corpus(seed: u64, modules: usize) -> Vec<SnippetDocument> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut docs = fixture_docs();
    for i in 0..modules {
        let path = format!("synthetic/{}/mod_{i:02}.py", snake(&mut rng));
        let src = if i == 0 { "def broken(:\n    pass\n".to_string() } else { synthetic_module(&mut rng) };
        docs.extend(parse_source(&path, &src).expect("parses").documents);
    }
    docs
}


// ---------------------------------------------------------------------------
// Oracle tokenizer and brute-force evaluator, written against the documented
// tokenization rules rather than the engine's code.

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn oracle_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Split at underscores, lower-to-upper transitions and the end of an acronym.
fn oracle_parts(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut parts = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' {
            if !cur.is_empty() {
                parts.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if !cur.is_empty() {
            let prev = chars[i - 1];
            let next = chars.get(i + 1).copied();
            let split = c.is_uppercase()
                && ((prev.is_lowercase() || prev.is_numeric())
                    || (prev.is_uppercase() && next.is_some_and(|n| n.is_lowercase())));
            if split {
                parts.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    parts.into_iter().map(|p| p.to_lowercase()).collect()
}

pub fn oracle_token_set(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for w in oracle_words(text) {
        let parts = oracle_parts(&w);
        out.insert(w.to_lowercase());
        let joined = parts.concat();
        if !joined.is_empty() {
            out.insert(joined);
        }
        out.extend(parts);
    }
    out
}

pub fn oracle_part_sequence(text: &str) -> Vec<String> {
    oracle_words(text).iter().flat_map(|w| oracle_parts(w)).collect()
}

fn contains_run(seq: &[String], run: &[String]) -> bool {
    !run.is_empty() && seq.windows(run.len()).any(|w| w == run)
}

/// A document pre-tokenized by the oracle rules.
pub struct OracleDoc {
    pub id: String,
    pub snippet_type: SnippetType,
    text_tokens: BTreeSet<String>,
    text_parts: Vec<String>,
    path_tokens: BTreeSet<String>,
    path_parts: Vec<String>,
}

impl OracleDoc {
    pub fn new(doc: &SnippetDocument) -> Self {
        OracleDoc {
            id: doc.id.clone(),
            snippet_type: doc.snippet_type,
            text_tokens: oracle_token_set(&doc.text),
            text_parts: oracle_part_sequence(&doc.text),
            path_tokens: oracle_token_set(&doc.file_path),
            path_parts: oracle_part_sequence(&doc.file_path),
        }
    }

    pub fn matches(&self, ast: &QueryAst) -> bool {
        match ast {
            QueryAst::Term(Field::Type, v) => self.snippet_type.as_str().eq_ignore_ascii_case(v),
            QueryAst::Term(Field::Text, v) => self.text_tokens.contains(&v.to_lowercase()),
            QueryAst::Term(Field::Path, v) => self.path_tokens.contains(&v.to_lowercase()),
            QueryAst::Phrase(Field::Type, _) => false,
            QueryAst::Phrase(Field::Text, parts) => contains_run(&self.text_parts, parts),
            QueryAst::Phrase(Field::Path, parts) => contains_run(&self.path_parts, parts),
            QueryAst::And(cs) => cs.iter().all(|c| self.matches(c)),
            QueryAst::Or(cs) => cs.iter().any(|c| self.matches(c)),
            QueryAst::Not(c) => !self.matches(c),
        }
    }
}

pub fn oracle_docs(docs: &[SnippetDocument]) -> Vec<OracleDoc> {
    docs.iter().map(OracleDoc::new).collect()
}

pub fn oracle_eval(ast: &QueryAst, docs: &[OracleDoc]) -> BTreeSet<String> {
    docs.iter().filter(|d| d.matches(ast)).map(|d| d.id.clone()).collect()
}

// ---------------------------------------------------------------------------
// Random queries

pub struct QueryVocab {
    pub text_terms: Vec<String>,
    pub path_terms: Vec<String>,
    pub text_phrases: Vec<Vec<String>>,
    pub path_phrases: Vec<Vec<String>>,
}

impl QueryVocab {
    pub fn from_docs(docs: &[SnippetDocument]) -> Self {
        let mut text_terms = BTreeSet::new();
        let mut path_terms = BTreeSet::new();
        let mut text_phrases = BTreeSet::new();
        let mut path_phrases = BTreeSet::new();
        for d in docs {
            text_terms.extend(oracle_token_set(&d.text));
            path_terms.extend(oracle_token_set(&d.file_path));
            let seq = oracle_part_sequence(&d.text);
            for n in 2..=3 {
                for w in seq.windows(n).step_by(7) {
                    text_phrases.insert(w.to_vec());
                }
            }
            let pseq = oracle_part_sequence(&d.file_path);
            for w in pseq.windows(2) {
                path_phrases.insert(w.to_vec());
            }
        }
        QueryVocab {
            text_terms: text_terms.into_iter().collect(),
            path_terms: path_terms.into_iter().collect(),
            text_phrases: text_phrases.into_iter().collect(),
            path_phrases: path_phrases.into_iter().collect(),
        }
    }
}

const ABSENT: &[&str] = &["zzqx", "nonexistentthing", "qwv"];

pub fn random_leaf<R: Rng>(rng: &mut R, v: &QueryVocab) -> QueryAst {
    let roll = rng.gen_range(0..100);
    match roll {
        0..=4 => QueryAst::Term(Field::Text, pick(rng, ABSENT).to_string()),
        5..=49 => QueryAst::Term(Field::Text, v.text_terms.choose(rng).unwrap().clone()),
        50..=62 => QueryAst::Term(Field::Path, v.path_terms.choose(rng).unwrap().clone()),
        63..=74 => QueryAst::type_term(*SnippetType::ALL.choose(rng).unwrap()),
        75..=89 => QueryAst::Phrase(Field::Text, v.text_phrases.choose(rng).unwrap().clone()),
        _ => QueryAst::Phrase(Field::Path, v.path_phrases.choose(rng).unwrap().clone()),
    }
}

/// A random query whose depth is at most `max_depth`.
pub fn random_ast<R: Rng>(rng: &mut R, v: &QueryVocab, max_depth: usize) -> QueryAst {
    if max_depth <= 1 || rng.gen_bool(0.3) {
        return random_leaf(rng, v);
    }
    match rng.gen_range(0..5) {
        0 => QueryAst::Not(Box::new(random_ast(rng, v, max_depth - 1))),
        1 | 2 => QueryAst::And((0..rng.gen_range(2..=3)).map(|_| random_ast(rng, v, max_depth - 1)).collect()),
        _ => QueryAst::Or((0..rng.gen_range(2..=3)).map(|_| random_ast(rng, v, max_depth - 1)).collect()),
    }
}

/// Queries with at least one match, for pagination checks.
pub fn random_matching_query<R: Rng>(rng: &mut R, v: &QueryVocab, docs: &[OracleDoc]) -> QueryAst {
    loop {
        let ast = random_ast(rng, v, 3);
        if !oracle_eval(&ast, docs).is_empty() {
            return ast;
        }
    }
}

// ---------------------------------------------------------------------------
// Multiset matching oracle

/// Maximum bipartite matching between predicted and gold call occurrences,
/// where an edge joins equal names (Kuhn's augmenting paths).
pub fn bipartite_matches(predicted: &[String], gold: &[String]) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &g in &adj[u] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].is_none() || augment(owner[g].unwrap(), adj, seen, owner) {
                owner[g] = Some(u);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = predicted
        .iter()
        .map(|p| gold.iter().enumerate().filter(|(_, g)| *g == p).map(|(i, _)| i).collect())
        .collect();
    let mut owner = vec![None; gold.len()];
    let mut total = 0;
    for u in 0..predicted.len() {
        let mut seen = vec![false; gold.len()];
        if augment(u, &adj, &mut seen, &mut owner) {
            total += 1;
        }
    }
    total
}

/// (P, R, F1) straight from the definitions.
pub fn oracle_prf(predicted: &[String], gold: &[String]) -> (f64, f64, f64) {
    let m = bipartite_matches(predicted, gold) as f64;
    let p = if predicted.is_empty() { 0.0 } else { m / predicted.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { m / gold.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn random_calls<R: Rng>(rng: &mut R, max: usize) -> Vec<String> {
    const NAMES: &[&str] = &["detect", "caption", "ocr", "translate", "search", "crop", "classify"];
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| pick(rng, NAMES).to_string()).collect()
}

// ---------------------------------------------------------------------------
// Truncation oracle

/// Expected middle truncation, built by slicing a char vector.
pub fn oracle_truncate(text: &str, budget: usize) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= budget {
        return text.to_string();
    }
    #[allow(clippy::manual_div_ceil)]
    let head = (budget + 1) / 2;
    let tail = budget / 2;
    let dropped = chars.len() - head - tail;
    let mut out: String = chars[..head].iter().collect();
    out.push_str(&format!("\n...[{dropped} chars truncated]...\n"));
    out.extend(&chars[chars.len() - tail..]);
    out
}

pub fn random_stdout<R: Rng>(rng: &mut R, len: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'Z', '0', ' ', '\n', '\t', '.', 'é', 'ß', '→', '字', '🙂', '[', ']'];
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

// ---------------------------------------------------------------------------
// Golden agent outputs

pub struct GoldenOutput {
    pub name: &'static str,
    pub raw: &'static str,
    pub registered: &'static [ActionType],
    /// Ok((thought, type, content)) or Err((rule, exact description)).
    pub expected: Result<(&'static str, ActionType, &'static str), (&'static str, &'static str)>,
}

const ALL: &[ActionType] = &ActionType::ALL;
const NO_SUMMARY: &[ActionType] = &[ActionType::Search, ActionType::Code, ActionType::Done];

const R1: &str = "Every output must contain a non-empty <thought>...</thought> block.";
const R2: &str = "Every output must contain a <type>...</type> block naming the action type.";
const R5: &str =
    "Each output must contain exactly one action: one <thought>, one <type> and at most one <content> block.";

pub fn golden_outputs() -> Vec<GoldenOutput> {
    use ActionType::*;
    vec![
        GoldenOutput {
            name: "valid search",
            raw: "<thought>Find a detector.</thought>\n<type>search</type>\n<content>text:detect AND type:FUNCTION</content>",
            registered: ALL,
            expected: Ok(("Find a detector.", Search, "text:detect AND type:FUNCTION")),
        },
        GoldenOutput {
            name: "valid multi-line code keeps indentation",
            raw: "<thought>Run it.</thought>\n<type>code</type>\n<content>\nfor i in range(3):\n    print(i)\n</content>",
            registered: ALL,
            expected: Ok(("Run it.", Code, "for i in range(3):\n    print(i)")),
        },
        GoldenOutput {
            name: "valid done without content",
            raw: "<thought>Finished.</thought>\n<type>done</type>",
            registered: ALL,
            expected: Ok(("Finished.", Done, "")),
        },
        GoldenOutput {
            name: "valid done with content",
            raw: "<thought>Finished.</thought><type>done</type><content>bye</content>",
            registered: ALL,
            expected: Ok(("Finished.", Done, "bye")),
        },
        GoldenOutput {
            name: "valid code_summary",
            raw: "<thought>Summarize.</thought>\n<type>code_summary</type>\n<content>x = detect(img)</content>",
            registered: ALL,
            expected: Ok(("Summarize.", CodeSummary, "x = detect(img)")),
        },
        GoldenOutput {
            name: "valid with prose and padded tags",
            raw: "Sure, here is my next step.\n<thought>\n  Look up OCR.\n</thought>\n<type> search </type>\n<content>path:ocr</content>\nThanks!",
            registered: ALL,
            expected: Ok(("Look up OCR.", Search, "path:ocr")),
        },
        GoldenOutput {
            name: "R1 missing thought",
            raw: "<type>search</type>\n<content>text:ocr</content>",
            registered: ALL,
            expected: Err(("R1", R1)),
        },
        GoldenOutput {
            name: "R1 blank thought",
            raw: "<thought>   </thought>\n<type>search</type>\n<content>text:ocr</content>",
            registered: ALL,
            expected: Err(("R1", R1)),
        },
        GoldenOutput {
            name: "R1 unclosed thought",
            raw: "<thought>thinking...\n<type>search</type>\n<content>text:ocr</content>",
            registered: ALL,
            expected: Err(("R1", R1)),
        },
        GoldenOutput {
            name: "R2 missing type",
            raw: "<thought>Search.</thought>\n<content>text:ocr</content>",
            registered: ALL,
            expected: Err(("R2", R2)),
        },
        GoldenOutput {
            name: "R2 blank type",
            raw: "<thought>Search.</thought>\n<type>\n</type>\n<content>text:ocr</content>",
            registered: ALL,
            expected: Err(("R2", R2)),
        },
        GoldenOutput {
            name: "R3 unknown type",
            raw: "<thought>Browse.</thought>\n<type>browse</type>\n<content>x</content>",
            registered: ALL,
            expected: Err((
                "R3",
                "The action type `browse` is not available. <type> must be one of: search, code, done, code_summary.",
            )),
        },
        GoldenOutput {
            name: "R3 type names are case-sensitive",
            raw: "<thought>Search.</thought>\n<type>Search</type>\n<content>text:ocr</content>",
            registered: ALL,
            expected: Err((
                "R3",
                "The action type `Search` is not available. <type> must be one of: search, code, done, code_summary.",
            )),
        },
        GoldenOutput {
            name: "R3 known but unregistered type",
            raw: "<thought>Summarize.</thought>\n<type>code_summary</type>\n<content>x = 1</content>",
            registered: NO_SUMMARY,
            expected: Err((
                "R3",
                "The action type `code_summary` is not available. <type> must be one of: search, code, done.",
            )),
        },
        GoldenOutput {
            name: "R4 search without content",
            raw: "<thought>Search.</thought>\n<type>search</type>",
            registered: ALL,
            expected: Err(("R4", "A search action must contain a non-empty <content>...</content> block.")),
        },
        GoldenOutput {
            name: "R4 code with empty content",
            raw: "<thought>Run.</thought>\n<type>code</type>\n<content></content>",
            registered: ALL,
            expected: Err(("R4", "A code action must contain a non-empty <content>...</content> block.")),
        },
        GoldenOutput {
            name: "R4 code_summary with whitespace content",
            raw: "<thought>Save.</thought>\n<type>code_summary</type>\n<content>\n   \n</content>",
            registered: ALL,
            expected: Err(("R4", "A code_summary action must contain a non-empty <content>...</content> block.")),
        },
        GoldenOutput {
            name: "R5 two thoughts",
            raw: "<thought>One.</thought>\n<thought>Two.</thought>\n<type>done</type>",
            registered: ALL,
            expected: Err(("R5", R5)),
        },
        GoldenOutput {
            name: "R5 two complete actions",
            raw: "<thought>Search.</thought>\n<type>search</type>\n<content>text:ocr</content>\n<thought>Stop.</thought>\n<type>done</type>",
            registered: ALL,
            expected: Err(("R5", R5)),
        },
        GoldenOutput {
            name: "R5 wins over missing thought",
            raw: "<type>code</type>\n<content>a = 1</content>\n<content>b = 2</content>",
            registered: ALL,
            expected: Err(("R5", R5)),
        },
    ]
}

/// Apply a violation or action to a comparable form.
pub fn summarize_parse(
    r: &Result<codenav::orchestrator::AgentAction, codenav::orchestrator::Violation>,
) -> Result<(String, ActionType, String), (String, String)> {
    match r {
        Ok(a) => Ok((a.thought.clone(), a.action_type, a.content.clone())),
        Err(v) => Err((v.rule().to_string(), v.description())),
    }
}

pub fn expected_form(g: &GoldenOutput) -> Result<(String, ActionType, String), (String, String)> {
    match &g.expected {
        Ok((t, ty, c)) => Ok((t.to_string(), *ty, c.to_string())),
        Err((rule, d)) => Err((rule.to_string(), d.to_string())),
    }
}

/// Count of each snippet type, keyed by name.
pub fn type_histogram(docs: &[SnippetDocument]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for d in docs {
        *out.entry(d.snippet_type.as_str()).or_default() += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Scripted replay over the fixture index

pub const REPLAY_QUERY: &str = "How many objects are detected in street.png?";

pub fn replay_script() -> Vec<String> {
    vec![
        "<thought>Look for detection functions in the vision package.</thought>\n<type>search</type>\n<content>path:vision AND type:FUNCTION</content>".into(),
        "<thought>Show the next matches for the same query.</thought>\n<type>search</type>\n<content>path:vision AND type:FUNCTION</content>".into(),
        "<thought>Try the counting logic on stand-in boxes.</thought>\n<type>code</type>\n<content>\nboxes = [[0, 0, 4, 4], [2, 2, 6, 6]]\ncount = len(boxes)\nprint(count)\n</content>".into(),
        "<thought>Save the final solution.</thought>\n<type>code_summary</type>\n<content>\nfrom toolkit.utils.io import load_image\nfrom toolkit.vision.detect import detect_objects\n\nobjects = detect_objects(load_image('street.png'))\nprint(len(objects))\n</content>".into(),
        "<thought>The solution is saved.</thought>\n<type>done</type>".into(),
        "<thought>This step must never run.</thought>\n<type>search</type>\n<content>text:never</content>".into(),
    ]
}

pub fn replay_config() -> codenav::orchestrator::EpisodeConfig {
    let description = std::fs::read_to_string(fixture_repo().join("README.md")).unwrap();
    codenav::orchestrator::EpisodeConfig {
        query_id: "replay".into(),
        query: REPLAY_QUERY.into(),
        library_description: description.trim_end().to_string(),
        max_steps: 10,
        retrieval: codenav::retrieval::RetrievalLimits { max_matches: 100, expanded: 2, prototypes: 2 },
        ..codenav::orchestrator::EpisodeConfig::default()
    }
}

/// Run the scripted episode with the in-process kernel, persisting to `out_dir`.
pub fn run_replay(out_dir: &Path) -> codenav::orchestrator::EpisodeTrajectory {
    use codenav::execution::{FakeKernel, KernelClient};
    use codenav::orchestrator::{run_episode, Environments, ExecutionEnv, RunOptions};
    use codenav::retrieval::{DocstringSummarizer, RetrievalEnv};

    let config = replay_config();
    let mut kernel: ExecutionEnv = KernelClient::new(Box::new(FakeKernel::new()));
    kernel.connect().expect("in-process kernel starts");
    let envs = Environments {
        retrieval: Some(RetrievalEnv::new(fixture_index(), config.retrieval, Arc::new(DocstringSummarizer))),
        execution: Some(kernel),
    };
    let mut agent = codenav::llm::ScriptedAgent::new(replay_script());
    let opts = RunOptions { out_dir: Some(out_dir.to_path_buf()), zero_durations: true };
    run_episode(config, codenav::orchestrator::DEFAULT_SYSTEM_PROMPT, &mut agent, envs, &opts).expect("episode runs")
}
