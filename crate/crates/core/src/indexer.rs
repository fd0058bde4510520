//! Python source extraction and the on-disk index store.
//!
//! Module-level functions, classes, imports and assignments become documents,
//! as do methods directly inside a class body. Nested functions and statements
//! inside function bodies are not indexed. A file that does not parse cleanly
//! is kept as a single `OTHER` document so it stays searchable.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{Node, Parser};
use walkdir::WalkDir;

use crate::snippet::{collapse_signature, line_count, slice_lines, SnippetDocument, SnippetType};

pub const EXTRACTION_RULES_VERSION: &str = "python-module-level/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";

const SOURCE_EXTENSIONS: &[&str] = &["py", "pyi"];

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("{path}: file is not valid UTF-8")]
    FileDecode { path: String },
    #[error("{path}: unsupported source extension")]
    UnsupportedExtension { path: String },
    #[error("failed to build index from {root}: {message}")]
    IndexBuild { root: String, message: String },
    #[error("no source files matched under {root}")]
    EmptyCorpus { root: String },
    #[error("invalid glob `{glob}`: {message}")]
    Glob { glob: String, message: String },
    #[error("index store at {path} is corrupt: {message}")]
    CorruptStore { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Summary of one index build, persisted as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub root: String,
    pub file_count: usize,
    pub doc_count: usize,
    pub type_counts: BTreeMap<SnippetType, usize>,
    pub extraction_rules_version: String,
    pub created_at: String,
    pub warnings: Vec<String>,
}

/// Result of parsing one file: its documents plus anything worth reporting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedFile {
    pub documents: Vec<SnippetDocument>,
    pub warnings: Vec<String>,
}

pub fn is_source_path(path: &str) -> bool {
    Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| SOURCE_EXTENSIONS.contains(&e))
}

fn python_parser() -> Parser {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .expect("tree-sitter-python grammar is ABI compatible");
    parser
}

/// Decode raw bytes and extract documents.
pub fn parse_file_bytes(file_path: &str, bytes: &[u8]) -> Result<ParsedFile, IndexError> {
    let source = std::str::from_utf8(bytes).map_err(|_| IndexError::FileDecode {
        path: file_path.to_string(),
    })?;
    parse_source(file_path, source)
}

/// Extract documents from one source file, in file order.
pub fn parse_file(file_path: &str, source_text: &str) -> Result<Vec<SnippetDocument>, IndexError> {
    parse_source(file_path, source_text).map(|p| p.documents)
}

/// Like [`parse_file`], but also returns warnings (syntax errors).
pub fn parse_source(file_path: &str, source: &str) -> Result<ParsedFile, IndexError> {
    if !is_source_path(file_path) {
        return Err(IndexError::UnsupportedExtension {
            path: file_path.to_string(),
        });
    }
    let total_lines = line_count(source);
    if source.trim().is_empty() {
        return Ok(ParsedFile::default());
    }

    let mut parser = python_parser();
    let tree = parser.parse(source, None).ok_or_else(|| IndexError::IndexBuild {
        root: file_path.to_string(),
        message: "parser returned no tree".into(),
    })?;
    let root = tree.root_node();

    if root.has_error() {
        let text = slice_lines(source, 1, total_lines).unwrap_or_default();
        let doc = SnippetDocument::new(
            SnippetType::Other,
            file_path,
            1,
            total_lines,
            text,
            "",
            None,
        );
        return Ok(ParsedFile {
            documents: vec![doc],
            warnings: vec![format!(
                "{file_path}: syntax error, indexed as a single OTHER document"
            )],
        });
    }

    let mut extractor = Extractor {
        path: file_path,
        source,
        docs: Vec::new(),
    };
    let mut cursor = root.walk();
    for child in root.named_children(&mut cursor) {
        extractor.module_item(child);
    }
    Ok(ParsedFile {
        documents: extractor.docs,
        warnings: Vec::new(),
    })
}

struct Extractor<'a> {
    path: &'a str,
    source: &'a str,
    docs: Vec<SnippetDocument>,
}

impl<'a> Extractor<'a> {
    fn module_item(&mut self, node: Node<'_>) {
        match node.kind() {
            "function_definition" | "class_definition" | "decorated_definition" => {
                let Some(def) = definition_of(node) else { return };
                let ty = if def.kind() == "class_definition" {
                    SnippetType::Class
                } else {
                    SnippetType::Function
                };
                let Some(id) = self.push_definition(node, def, ty, None) else {
                    return;
                };
                if ty == SnippetType::Class {
                    self.class_body(def, &id);
                }
            }
            "import_statement" | "import_from_statement" | "future_import_statement" => {
                if let Some((start, end, text)) = self.span(node) {
                    let proto = collapse_signature(&text);
                    self.docs.push(SnippetDocument::new(
                        SnippetType::Import,
                        self.path,
                        start,
                        end,
                        text,
                        proto,
                        None,
                    ));
                }
            }
            "expression_statement" => {
                let is_assignment = node.named_child(0).is_some_and(|c| {
                    matches!(c.kind(), "assignment" | "augmented_assignment")
                });
                if !is_assignment {
                    return;
                }
                if let Some((start, end, text)) = self.span(node) {
                    let proto = text.lines().next().unwrap_or("").trim().to_string();
                    self.docs.push(SnippetDocument::new(
                        SnippetType::Assignment,
                        self.path,
                        start,
                        end,
                        text,
                        proto,
                        None,
                    ));
                }
            }
            _ => {}
        }
    }

    fn class_body(&mut self, class_def: Node<'_>, class_id: &str) {
        let Some(body) = class_def.child_by_field_name("body") else {
            return;
        };
        let mut cursor = body.walk();
        for item in body.named_children(&mut cursor) {
            if !matches!(item.kind(), "function_definition" | "decorated_definition") {
                continue;
            }
            if let Some(def) = definition_of(item) {
                if def.kind() == "function_definition" {
                    self.push_definition(item, def, SnippetType::Method, Some(class_id.to_string()));
                }
            }
        }
    }

    /// `outer` spans decorators, `def` is the bare definition node.
    fn push_definition(
        &mut self,
        outer: Node<'_>,
        def: Node<'_>,
        ty: SnippetType,
        parent_id: Option<String>,
    ) -> Option<String> {
        let (start, end, text) = self.span(outer)?;
        let header = definition_header(def, self.source);
        let doc = SnippetDocument::new(ty, self.path, start, end, text, header, parent_id);
        let id = doc.id.clone();
        self.docs.push(doc);
        Some(id)
    }

    fn span(&self, node: Node<'_>) -> Option<(usize, usize, String)> {
        let (start, end) = node_lines(node);
        let text = slice_lines(self.source, start, end)?;
        Some((start, end, text))
    }
}

fn definition_of(node: Node<'_>) -> Option<Node<'_>> {
    match node.kind() {
        "function_definition" | "class_definition" => Some(node),
        "decorated_definition" => node.child_by_field_name("definition"),
        _ => None,
    }
}

/// 1-based inclusive line range. A node ending at column 0 ends on the line before.
fn node_lines(node: Node<'_>) -> (usize, usize) {
    let start = node.start_position();
    let end = node.end_position();
    let mut end_row = end.row;
    if end.column == 0 && end.row > start.row {
        end_row -= 1;
    }
    (start.row + 1, end_row + 1)
}

/// Header of a def/class up to and including the colon before its body.
fn definition_header(def: Node<'_>, source: &str) -> String {
    let body_start = def
        .child_by_field_name("body")
        .map(|b| b.start_byte())
        .unwrap_or(def.end_byte());
    let mut colon_end = None;
    let mut cursor = def.walk();
    for child in def.children(&mut cursor) {
        if child.start_byte() >= body_start {
            break;
        }
        if child.kind() == ":" {
            colon_end = Some(child.end_byte());
        }
    }
    let end = colon_end.unwrap_or(body_start);
    collapse_signature(&source[def.start_byte()..end])
}

/// File selection for [`index_repository`].
#[derive(Debug, Clone)]
pub struct IndexOptions {
    pub include_globs: Vec<String>,
    pub exclude_globs: Vec<String>,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            include_globs: vec!["**/*.py".to_string()],
            exclude_globs: Vec::new(),
        }
    }
}

fn build_globset(globs: &[String]) -> Result<GlobSet, IndexError> {
    let mut builder = GlobSetBuilder::new();
    for g in globs {
        let glob = Glob::new(g).map_err(|e| IndexError::Glob {
            glob: g.clone(),
            message: e.to_string(),
        })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| IndexError::Glob {
        glob: globs.join(","),
        message: e.to_string(),
    })
}

/// Repo-relative paths selected by the include/exclude globs, sorted.
pub fn collect_source_files(root: &Path, options: &IndexOptions) -> Result<Vec<String>, IndexError> {
    let include = build_globset(&options.include_globs)?;
    let exclude = build_globset(&options.exclude_globs)?;
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IndexError::IndexBuild {
            root: root.display().to_string(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if include.is_match(&rel) && !exclude.is_match(&rel) {
            files.push(rel);
        }
    }
    files.sort();
    Ok(files)
}

/// Documents and manifest for a repository, without touching disk.
pub fn build_index(
    root: &Path,
    options: &IndexOptions,
) -> Result<(IndexManifest, Vec<SnippetDocument>), IndexError> {
    let meta = fs::metadata(root).map_err(|e| IndexError::IndexBuild {
        root: root.display().to_string(),
        message: e.to_string(),
    })?;
    if !meta.is_dir() {
        return Err(IndexError::IndexBuild {
            root: root.display().to_string(),
            message: "not a directory".into(),
        });
    }
    let files = collect_source_files(root, options)?;
    if files.is_empty() {
        return Err(IndexError::EmptyCorpus {
            root: root.display().to_string(),
        });
    }

    let mut docs = Vec::new();
    let mut warnings = Vec::new();
    let mut file_count = 0;
    for rel in &files {
        let bytes = fs::read(root.join(rel))?;
        match parse_file_bytes(rel, &bytes) {
            Ok(parsed) => {
                file_count += 1;
                docs.extend(parsed.documents);
                warnings.extend(parsed.warnings);
            }
            Err(e @ (IndexError::FileDecode { .. } | IndexError::UnsupportedExtension { .. })) => {
                warnings.push(format!("{e}; skipped"));
            }
            Err(e) => return Err(e),
        }
    }

    let mut type_counts: BTreeMap<SnippetType, usize> =
        SnippetType::ALL.iter().map(|t| (*t, 0)).collect();
    for d in &docs {
        *type_counts.entry(d.snippet_type).or_default() += 1;
    }
    let root_display = fs::canonicalize(root)
        .unwrap_or_else(|_| root.to_path_buf())
        .display()
        .to_string();
    let manifest = IndexManifest {
        root: root_display,
        file_count,
        doc_count: docs.len(),
        type_counts,
        extraction_rules_version: EXTRACTION_RULES_VERSION.to_string(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        warnings,
    };
    Ok((manifest, docs))
}

/// Parse a repository and atomically write `manifest.json` + `documents.jsonl` to `out_dir`.
pub fn index_repository(
    root: &Path,
    options: &IndexOptions,
    out_dir: &Path,
) -> Result<IndexManifest, IndexError> {
    let (manifest, docs) = build_index(root, options)?;
    write_store(out_dir, &manifest, &docs)?;
    Ok(manifest)
}

pub fn documents_to_jsonl(docs: &[SnippetDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

/// Write the store into a sibling temp dir, then swap it into place.
pub fn write_store(
    out_dir: &Path,
    manifest: &IndexManifest,
    docs: &[SnippetDocument],
) -> Result<(), IndexError> {
    if out_dir.exists() {
        let non_empty = fs::read_dir(out_dir)?.next().is_some();
        if non_empty && !out_dir.join(MANIFEST_FILE).exists() {
            return Err(IndexError::IndexBuild {
                root: out_dir.display().to_string(),
                message: "output directory exists and is not an index store".into(),
            });
        }
    }
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let name = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "index".into());
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;

    let mut manifest_json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    manifest_json.push('\n');
    fs::write(tmp.join(MANIFEST_FILE), manifest_json)?;
    let mut f = fs::File::create(tmp.join(DOCUMENTS_FILE))?;
    f.write_all(documents_to_jsonl(docs).as_bytes())?;
    f.sync_all()?;

    if out_dir.exists() {
        let old = parent.join(format!(".{name}.old-{}", std::process::id()));
        fs::rename(out_dir, &old)?;
        fs::rename(&tmp, out_dir)?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&tmp, out_dir)?;
    }
    Ok(())
}

/// Load a store written by [`index_repository`], checking the manifest counts.
pub fn load_store(dir: &Path) -> Result<(IndexManifest, Vec<SnippetDocument>), IndexError> {
    let corrupt = |message: String| IndexError::CorruptStore {
        path: dir.display().to_string(),
        message,
    };
    let manifest: IndexManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)
        .map_err(|e| corrupt(format!("manifest: {e}")))?;
    let raw = fs::read_to_string(dir.join(DOCUMENTS_FILE))?;
    let mut docs = Vec::with_capacity(manifest.doc_count);
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: SnippetDocument =
            serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
        docs.push(doc);
    }
    if docs.len() != manifest.doc_count {
        return Err(corrupt(format!(
            "manifest lists {} documents, store has {}",
            manifest.doc_count,
            docs.len()
        )));
    }
    Ok((manifest, docs))
}
