use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::query::{Field, QueryAst};
use super::tokenize::{part_sequence, tokens};
use crate::snippet::{SnippetDocument, SnippetType};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Maximum number of matches pulled from the index per search.
pub const DEFAULT_MATCH_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub doc_id: String,
    pub snippet_type: SnippetType,
    pub score: f64,
    /// Lower tiers are shown first.
    pub tier: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResults {
    pub hits: Vec<RankedHit>,
    /// Matches before the limit was applied.
    pub total_matches: usize,
}

/// In-memory inverted index over a document store. Immutable once built.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    docs: Vec<SnippetDocument>,
    by_id: HashMap<String, usize>,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    text_postings: HashMap<String, Vec<u32>>,
    path_postings: HashMap<String, Vec<u32>>,
    type_postings: HashMap<SnippetType, Vec<u32>>,
    text_parts: Vec<Vec<String>>,
    path_parts: Vec<Vec<String>>,
}

impl SearchIndex {
    pub fn new(docs: Vec<SnippetDocument>) -> Self {
        let mut by_id = HashMap::with_capacity(docs.len());
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut text_postings: HashMap<String, Vec<u32>> = HashMap::new();
        let mut path_postings: HashMap<String, Vec<u32>> = HashMap::new();
        let mut type_postings: HashMap<SnippetType, Vec<u32>> = HashMap::new();
        let mut text_parts = Vec::with_capacity(docs.len());
        let mut path_parts = Vec::with_capacity(docs.len());

        for (i, doc) in docs.iter().enumerate() {
            let i = i as u32;
            by_id.insert(doc.id.clone(), i as usize);
            let toks = tokens(&doc.text);
            doc_lens.push(toks.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                text_postings.entry(t.clone()).or_default().push(i);
            }
            term_freqs.push(tf);
            let path_tokens: BTreeSet<String> = tokens(&doc.file_path).into_iter().collect();
            for t in path_tokens {
                path_postings.entry(t).or_default().push(i);
            }
            type_postings.entry(doc.snippet_type).or_default().push(i);
            text_parts.push(part_sequence(&doc.text));
            path_parts.push(part_sequence(&doc.file_path));
        }
        let avg_doc_len = if docs.is_empty() {
            0.0
        } else {
            doc_lens.iter().map(|&l| l as f64).sum::<f64>() / docs.len() as f64
        };

        SearchIndex {
            docs,
            by_id,
            term_freqs,
            doc_lens,
            avg_doc_len,
            text_postings,
            path_postings,
            type_postings,
            text_parts,
            path_parts,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[SnippetDocument] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&SnippetDocument> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    /// Run a query, returning at most `limit` hits by (score desc, doc_id asc).
    pub fn search(&self, ast: &QueryAst, limit: usize) -> SearchResults {
        let matched = self.evaluate(ast);
        let total_matches = matched.len();
        let query_terms = positive_text_terms(ast);
        let mut hits: Vec<RankedHit> = matched
            .into_iter()
            .map(|i| {
                let doc = &self.docs[i as usize];
                let score = if query_terms.is_empty() {
                    1.0
                } else {
                    self.bm25(i as usize, &query_terms)
                };
                RankedHit {
                    doc_id: doc.id.clone(),
                    snippet_type: doc.snippet_type,
                    score,
                    tier: 0,
                }
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        hits.truncate(limit);
        SearchResults {
            hits,
            total_matches,
        }
    }

    fn bm25(&self, doc: usize, terms: &BTreeSet<String>) -> f64 {
        let n = self.docs.len() as f64;
        let len_norm = if self.avg_doc_len > 0.0 {
            1.0 - BM25_B + BM25_B * self.doc_lens[doc] as f64 / self.avg_doc_len
        } else {
            1.0
        };
        terms
            .iter()
            .map(|t| {
                let tf = self.term_freqs[doc].get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                let df = self.text_postings.get(t).map_or(0, Vec::len) as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * len_norm)
            })
            .sum()
    }

    /// Sorted indices of matching documents.
    fn evaluate(&self, ast: &QueryAst) -> Vec<u32> {
        match ast {
            QueryAst::Term(Field::Text, t) => self.text_postings.get(t).cloned().unwrap_or_default(),
            QueryAst::Term(Field::Path, t) => self.path_postings.get(t).cloned().unwrap_or_default(),
            QueryAst::Term(Field::Type, t) => t
                .parse::<SnippetType>()
                .ok()
                .and_then(|ty| self.type_postings.get(&ty).cloned())
                .unwrap_or_default(),
            QueryAst::Phrase(field, parts) => self.phrase(*field, parts),
            QueryAst::And(children) => {
                let mut sets: Vec<Vec<u32>> = children.iter().map(|c| self.evaluate(c)).collect();
                sets.sort_by_key(Vec::len);
                let mut iter = sets.into_iter();
                let first = iter.next().unwrap_or_default();
                iter.fold(first, |acc, s| intersect(&acc, &s))
            }
            QueryAst::Or(children) => children
                .iter()
                .map(|c| self.evaluate(c))
                .fold(Vec::new(), |acc, s| union(&acc, &s)),
            QueryAst::Not(child) => {
                let excluded = self.evaluate(child);
                complement(&excluded, self.docs.len() as u32)
            }
        }
    }

    fn phrase(&self, field: Field, parts: &[String]) -> Vec<u32> {
        let (postings, sequences) = match field {
            Field::Text => (&self.text_postings, &self.text_parts),
            Field::Path => (&self.path_postings, &self.path_parts),
            Field::Type => return Vec::new(),
        };
        let mut candidates: Option<Vec<u32>> = None;
        for p in parts {
            let list = postings.get(p).cloned().unwrap_or_default();
            candidates = Some(match candidates {
                None => list,
                Some(c) => intersect(&c, &list),
            });
        }
        candidates
            .unwrap_or_default()
            .into_iter()
            .filter(|&i| contains_run(&sequences[i as usize], parts))
            .collect()
    }
}

fn contains_run(seq: &[String], run: &[String]) -> bool {
    !run.is_empty() && seq.windows(run.len()).any(|w| w == run)
}

fn positive_text_terms(ast: &QueryAst) -> BTreeSet<String> {
    fn walk(ast: &QueryAst, out: &mut BTreeSet<String>) {
        match ast {
            QueryAst::Term(Field::Text, t) => {
                out.insert(t.clone());
            }
            QueryAst::Phrase(Field::Text, parts) => out.extend(parts.iter().cloned()),
            QueryAst::And(cs) | QueryAst::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
            _ => {}
        }
    }
    let mut out = BTreeSet::new();
    walk(ast, &mut out);
    out
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

fn complement(excluded: &[u32], n: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(n as usize - excluded.len().min(n as usize));
    let mut ex = excluded.iter().peekable();
    for i in 0..n {
        if ex.peek() == Some(&&i) {
            ex.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Run a query against an index, keeping at most `limit` hits.
pub fn execute_query(ast: &QueryAst, index: &SearchIndex, limit: usize) -> Vec<RankedHit> {
    index.search(ast, limit.max(1)).hits
}

/// Heuristic tier for a snippet type: definitions first, imports and assignments last.
pub fn tier_for(ty: SnippetType) -> u8 {
    match ty {
        SnippetType::Function | SnippetType::Class | SnippetType::Method => 0,
        SnippetType::Other => 1,
        SnippetType::Assignment | SnippetType::Import => 2,
    }
}

/// Assign tiers and sort by (tier asc, score desc, doc_id asc).
pub fn rerank(mut hits: Vec<RankedHit>) -> Vec<RankedHit> {
    for h in &mut hits {
        h.tier = tier_for(h.snippet_type);
    }
    hits.sort_by(|a, b| {
        a.tier
            .cmp(&b.tier)
            .then_with(|| b.score.total_cmp(&a.score))
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::query::parse_query;

    fn doc(ty: SnippetType, path: &str, text: &str) -> SnippetDocument {
        SnippetDocument::new(ty, path, 1, 1, text, text.lines().next().unwrap_or(""), None)
    }

    fn small_corpus() -> SearchIndex {
        SearchIndex::new(vec![
            doc(SnippetType::Function, "vision/detect.py", "def object_detection(image):\n    return []"),
            doc(SnippetType::Class, "vision/models.py", "class ObjectDetection:\n    pass"),
            doc(SnippetType::Import, "app.py", "from vision.models import ObjectDetection"),
        ])
    }

    fn ids(index: &SearchIndex, q: &str) -> BTreeSet<usize> {
        let ast = parse_query(q).unwrap();
        execute_query(&ast, index, index.len())
            .into_iter()
            .map(|h| index.documents().iter().position(|d| d.id == h.doc_id).unwrap())
            .collect()
    }

    #[test]
    fn class_and_text_filter() {
        let idx = small_corpus();
        assert_eq!(ids(&idx, "(type: CLASS) AND (text: ObjectDetection)"), BTreeSet::from([1]));
        assert_eq!(ids(&idx, "text: ObjectDetection"), BTreeSet::from([0, 1, 2]));
        assert_eq!(ids(&idx, "object_detection"), BTreeSet::from([0]));
    }

    #[test]
    fn missing_term_matches_nothing() {
        let idx = small_corpus();
        assert!(ids(&idx, "text: zzz_nonexistent").is_empty());
    }

    #[test]
    fn not_is_complement() {
        let idx = small_corpus();
        assert_eq!(ids(&idx, "NOT type: IMPORT"), BTreeSet::from([0, 1]));
        assert_eq!(ids(&idx, "path: vision AND NOT image"), BTreeSet::from([1]));
    }

    #[test]
    fn phrases_need_adjacent_parts() {
        let idx = small_corpus();
        assert_eq!(ids(&idx, "\"object detection\""), BTreeSet::from([0, 1, 2]));
        assert_eq!(ids(&idx, "\"detection image\""), BTreeSet::from([0]));
        assert_eq!(ids(&idx, "\"image detection\""), BTreeSet::new());
        assert_eq!(ids(&idx, "path: \"vision models\""), BTreeSet::from([1]));
    }

    #[test]
    fn non_text_queries_score_one() {
        let idx = small_corpus();
        let hits = execute_query(&parse_query("type: CLASS OR type: FUNCTION").unwrap(), &idx, 10);
        assert!(hits.iter().all(|h| h.score == 1.0));
        let mut sorted = hits.clone();
        sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        assert_eq!(hits, sorted);
    }

    #[test]
    fn limit_caps_hits_but_not_total() {
        let idx = small_corpus();
        let res = idx.search(&parse_query("ObjectDetection").unwrap(), 2);
        assert_eq!(res.hits.len(), 2);
        assert_eq!(res.total_matches, 3);
    }

    #[test]
    fn bm25_prefers_more_occurrences() {
        let idx = SearchIndex::new(vec![
            doc(SnippetType::Function, "a.py", "def a(): detect() ; other()"),
            doc(SnippetType::Function, "b.py", "def b(): detect() ; detect()"),
            doc(SnippetType::Function, "c.py", "def c(): nothing()"),
        ]);
        let hits = execute_query(&parse_query("detect").unwrap(), &idx, 10);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].doc_id, idx.documents()[1].id);
        assert!(hits[0].score > hits[1].score && hits[1].score > 0.0);
    }

    fn hit(id: &str, ty: SnippetType, score: f64) -> RankedHit {
        RankedHit {
            doc_id: id.into(),
            snippet_type: ty,
            score,
            tier: 0,
        }
    }

    #[test]
    fn rerank_demotes_imports() {
        let out = rerank(vec![
            hit("a", SnippetType::Import, 9.0),
            hit("b", SnippetType::Function, 1.0),
        ]);
        assert_eq!(out[0].doc_id, "b");
        assert_eq!((out[0].tier, out[1].tier), (0, 2));
    }

    #[test]
    fn rerank_keeps_ordered_functions_and_breaks_ties_by_id() {
        let input = vec![
            hit("c", SnippetType::Function, 3.0),
            hit("a", SnippetType::Method, 2.0),
            hit("b", SnippetType::Class, 1.0),
        ];
        assert_eq!(rerank(input.clone()), input);
        let out = rerank(vec![hit("z", SnippetType::Other, 1.0), hit("y", SnippetType::Other, 1.0)]);
        assert_eq!(out[0].doc_id, "y");
        assert_eq!(out[0].tier, 1);
    }
}
