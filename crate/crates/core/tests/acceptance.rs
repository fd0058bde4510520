//! Acceptance checks, one line per criterion. Runs without the libtest harness
//! so every line is printed even when an earlier check fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::time::Instant;

use codenav::eval::{aggregate_runs, best_match_f1, macro_average, tool_prf, CallMultiset};
use codenav::execution::{format_execution_response, truncate_middle, ExecutionResponse, OutputLimits};
use codenav::indexer::{build_index, index_repository, IndexOptions, DOCUMENTS_FILE, MANIFEST_FILE};
use codenav::orchestrator::{
    parse_and_validate_action, ActionType, Environments, Episode, EpisodeConfig, ExecutionEnv, ResponseKind,
    Termination, META_FILE, TRAJECTORY_FILE,
};
use codenav::retrieval::{handle_search, DocstringSummarizer, RetrievalEnv, RetrievalLimits, RetrievalMemory};
use codenav::search::{execute_query, parse_query, rerank, SearchIndex};
use codenav::snippet::slice_lines;
use codenav::SnippetType;
use common::*;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;
type NamedCheck = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ac1_search_oracle() -> Check {
    let started = Instant::now();
    let docs = oracle_corpus(7, 24);
    let types: BTreeSet<SnippetType> = docs.iter().map(|d| d.snippet_type).collect();
    ensure!(docs.len() >= 200, "corpus has only {} documents", docs.len());
    ensure!(types.len() == SnippetType::ALL.len(), "corpus covers {} of 6 snippet types", types.len());
    let oracle = oracle_docs(&docs);
    let vocab = QueryVocab::from_docs(&docs);
    let index = SearchIndex::new(docs.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut agree = 0;
    for _ in 0..500 {
        let ast = random_ast(&mut rng, &vocab, 4);
        ensure!(ast.depth() <= 4, "generated query deeper than 4: {ast}");
        let got: BTreeSet<String> = execute_query(&ast, &index, usize::MAX).into_iter().map(|h| h.doc_id).collect();
        let want = oracle_eval(&ast, &oracle);
        ensure!(got == want, "mismatch on `{ast}`: engine {} ids, oracle {} ids", got.len(), want.len());
        agree += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2}s (limit 10s)");
    Ok(format!("{agree}/500 queries agree over {} documents in {secs:.2}s (limit 10s)", docs.len()))
}

fn ac2_pagination() -> Check {
    let docs = oracle_corpus(7, 24);
    let oracle = oracle_docs(&docs);
    let vocab = QueryVocab::from_docs(&docs);
    let index = SearchIndex::new(docs);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut total_pages = 0;
    let mut shared = RetrievalMemory::new();
    let mut shared_seen = BTreeSet::new();
    for _ in 0..50 {
        let raw = random_matching_query(&mut rng, &vocab, &oracle).to_string();
        let limits = RetrievalLimits { max_matches: 100, expanded: rng.gen_range(1..=5), prototypes: 3 };
        let expected: Vec<String> =
            rerank(index.search(&parse_query(&raw).unwrap(), limits.max_matches).hits).into_iter().map(|h| h.doc_id).collect();
        let mut memory = RetrievalMemory::new();
        let mut seen = BTreeSet::new();
        let mut concat = Vec::new();
        for _ in 0..=expected.len() {
            let resp = handle_search(&raw, &mut memory, &index, &limits, &DocstringSummarizer).map_err(|e| e.to_string())?;
            total_pages += 1;
            for m in &resp.expanded {
                ensure!(seen.insert(m.doc.id.clone()), "`{raw}` expanded {} twice", m.doc.id);
                concat.push(m.doc.id.clone());
            }
            if resp.exhausted {
                break;
            }
        }
        ensure!(concat == expected, "`{raw}`: concatenated pages differ from the reranked match list");

        let resp = handle_search(&raw, &mut shared, &index, &limits, &DocstringSummarizer).map_err(|e| e.to_string())?;
        for m in &resp.expanded {
            ensure!(shared_seen.insert(m.doc.id.clone()), "{} expanded twice in one episode", m.doc.id);
        }
    }
    Ok(format!("50 queries, {total_pages} pages, disjoint and order-preserving; {} ids in a shared episode, none repeated", shared_seen.len()))
}

fn ac3_indexer_golden() -> Check {
    let root = fixture_repo();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = index_repository(&root, &IndexOptions::default(), a.path()).map_err(|e| e.to_string())?;
    index_repository(&root, &IndexOptions::default(), b.path()).map_err(|e| e.to_string())?;
    ensure!(manifest.file_count == 25, "indexed {} files, expected 25", manifest.file_count);
    let produced = fs::read(a.path().join(DOCUMENTS_FILE)).unwrap();
    let golden = fs::read(golden_dir().join("documents.jsonl")).map_err(|e| format!("golden missing: {e}"))?;
    ensure!(produced == golden, "documents.jsonl differs from the golden file");
    ensure!(produced == fs::read(b.path().join(DOCUMENTS_FILE)).unwrap(), "rebuild produced different documents");
    let norm = |dir: &std::path::Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
        v["root"] = "".into();
        v["created_at"] = "".into();
        v
    };
    let golden_manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(golden_dir().join("manifest.json")).unwrap()).unwrap();
    ensure!(norm(a.path()) == golden_manifest, "manifest differs from golden (ignoring root and created_at)");
    ensure!(norm(a.path()) == norm(b.path()), "rebuild produced a different manifest");
    let (_, docs) = build_index(&root, &IndexOptions::default()).map_err(|e| e.to_string())?;
    for d in &docs {
        let source = fs::read_to_string(root.join(&d.file_path)).unwrap();
        ensure!(
            slice_lines(&source, d.start_line, d.end_line).as_deref() == Some(d.text.as_str()),
            "{} is not a verbatim slice of {}",
            d.id,
            d.file_path
        );
    }
    Ok(format!("{} documents byte-identical to golden, all slices verbatim, rebuild deterministic", docs.len()))
}

fn ac4_metrics() -> Check {
    let ms = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<CallMultiset>();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;

    let r = tool_prf(&ms(&[]), &ms(&["a"]), 0);
    ensure!(r.precision == 0.0 && r.f1 == 0.0, "|A|=0 must give P=0, F1=0");
    let r = tool_prf(&ms(&["x"]), &ms(&["y"]), 0);
    ensure!(r.f1 == 0.0, "F1 must be 0 when P+R=0");
    let r = tool_prf(&ms(&["a", "b", "b"]), &ms(&["a", "b", "c"]), 0);
    ensure!(
        r.matches == 2 && close(r.precision, 2.0 / 3.0) && close(r.recall, 2.0 / 3.0) && close(r.f1, 2.0 / 3.0),
        "multiset example gave {r:?}"
    );
    let (idx, _) = best_match_f1(&ms(&["a", "b"]), &[ms(&["a", "b", "c", "d"]), ms(&["a"]), ms(&["a", "b"])], 0)
        .map_err(|e| e.to_string())?;
    ensure!(idx == 2, "best match picked gold {idx}, expected 2");
    let (idx, _) = best_match_f1(&ms(&["a", "b"]), &[ms(&["a", "b", "c", "d"]), ms(&["a"])], 0).map_err(|e| e.to_string())?;
    ensure!(idx == 1, "F1 tie must go to the higher-recall gold, got {idx}");
    ensure!(macro_average(&[1.0, 0.5, 0.0]) == Some(0.5), "macro average wrong");
    let agg = aggregate_runs(&[80.0, 81.0, 82.0]).map_err(|e| e.to_string())?;
    ensure!(close(agg.mean, 81.0) && close(agg.plus_minus, 2.0), "aggregate gave {} ± {}", agg.mean, agg.plus_minus);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let a = random_calls(&mut rng, 8);
        let g = random_calls(&mut rng, 8);
        let (p, r, f) = oracle_prf(&a, &g);
        let got = tool_prf(&a.iter().cloned().collect(), &g.iter().cloned().collect(), 0);
        ensure!(
            close(got.precision, p) && close(got.recall, r) && close(got.f1, f),
            "pair {i} disagrees with bipartite oracle: {a:?} vs {g:?}"
        );
    }
    Ok("unit table holds; aggregate [80,81,82] = 81.0 ± 2.0; 1000/1000 random pairs match the bipartite oracle".into())
}

fn ac5_action_protocol() -> Check {
    let goldens = golden_outputs();
    ensure!(goldens.len() == 20, "{} golden outputs, expected 20", goldens.len());
    for g in &goldens {
        let got = summarize_parse(&parse_and_validate_action(g.raw, g.registered));
        ensure!(got == expected_form(g), "`{}`: got {got:?}", g.name);
    }

    let fake = codenav::execution::FakeKernel::new();
    let mut kernel: ExecutionEnv = codenav::execution::KernelClient::new(Box::new(fake.clone()));
    kernel.connect()?;
    let envs = Environments {
        retrieval: Some(RetrievalEnv::new(
            fixture_index(),
            RetrievalLimits { max_matches: 100, expanded: 2, prototypes: 2 },
            std::sync::Arc::new(DocstringSummarizer),
        )),
        execution: Some(kernel),
    };
    let mut ep = Episode::new(EpisodeConfig { query: "q".into(), ..EpisodeConfig::default() }, envs);
    ep.advance("<thought>a</thought><type>search</type><content>path:vision</content>");
    ep.advance("<thought>b</thought><type>code</type><content>k = 3</content>");
    let memory = ep.envs.retrieval.as_ref().unwrap().memory().clone();
    let vars = fake.variables();
    let requests = fake.requests_seen();
    let mut invalid = 0;
    for g in goldens.iter().filter(|g| g.expected.is_err() && g.registered == ActionType::ALL.as_slice()) {
        let rec = ep.advance(g.raw);
        ensure!(rec.response_kind == ResponseKind::InvalidAction, "`{}` was not rejected", g.name);
        invalid += 1;
    }
    ensure!(ep.envs.retrieval.as_ref().unwrap().memory() == &memory, "an invalid action changed retrieval memory");
    ensure!(fake.variables() == vars && fake.requests_seen() == requests, "an invalid action reached the kernel");
    Ok(format!("20/20 golden outputs exact; {invalid} invalid steps left memory and kernel untouched"))
}

fn ac6_replay() -> Check {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let traj = run_replay(out.path());
    let secs = started.elapsed().as_secs_f64();
    ensure!(traj.termination == Termination::Done, "terminated with {:?}", traj.termination);
    ensure!(traj.records.len() == 5, "{} records; the sixth script entry must not run", traj.records.len());
    let produced = fs::read(out.path().join(TRAJECTORY_FILE)).unwrap();
    let golden = fs::read(golden_dir().join("replay_trajectory.jsonl")).map_err(|e| format!("golden missing: {e}"))?;
    ensure!(produced == golden, "trajectory.jsonl differs from the golden file");
    let meta = fs::read(out.path().join(META_FILE)).unwrap();
    ensure!(meta == fs::read(golden_dir().join("replay_meta.json")).unwrap(), "meta.json differs from the golden file");
    ensure!(secs < 5.0, "took {secs:.2}s (limit 5s)");
    Ok(format!("5-step trajectory byte-identical to golden, DONE, {secs:.2}s (limit 5s)"))
}

fn ac7_truncation() -> Check {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut truncated = 0;
    for i in 0..200 {
        let len = if i < 3 { [0, 50_000, 1][i] } else { rng.gen_range(0..=50_000) };
        let text = random_stdout(&mut rng, len);
        let budget = if rng.gen_bool(0.2) { len.max(1) } else { rng.gen_range(1..=60_000) };
        let got = truncate_middle(&text, budget);
        ensure!(got == oracle_truncate(&text, budget), "len {len}, budget {budget}: output differs from the rule");
        if len > budget {
            truncated += 1;
            let marker = format!("\n...[{} chars truncated]...\n", len - budget);
            ensure!(got.chars().count() == budget + marker.chars().count(), "kept chars != budget ({len}/{budget})");
        }
        if len > 0 {
            let resp = ExecutionResponse { stdout: text.clone(), updated_vars: vec![], deleted_vars: vec![], error: None, duration_s: 0.0 };
            let formatted = format_execution_response(&resp, &OutputLimits { max_stdout_chars: budget, max_var_chars: 500 });
            ensure!(formatted == format!("STDOUT:\n{got}"), "formatted response does not embed the truncated stdout");
        }
    }
    Ok(format!("200 random cases ({truncated} truncated) match prefix/marker/suffix exactly"))
}

fn main() {
    let checks: [NamedCheck; 7] = [
        ("AC1 search oracle equivalence", ac1_search_oracle),
        ("AC2 pagination and dedup", ac2_pagination),
        ("AC3 indexer golden corpus", ac3_indexer_golden),
        ("AC4 metric conformance", ac4_metrics),
        ("AC5 action protocol", ac5_action_protocol),
        ("AC6 deterministic replay", ac6_replay),
        ("AC7 truncation bit-exactness", ac7_truncation),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
