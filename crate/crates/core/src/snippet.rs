//! The unit of search: one indexed block of source code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Kind of code block a [`SnippetDocument`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SnippetType {
    Function,
    Class,
    Method,
    Import,
    Assignment,
    Other,
}

impl SnippetType {
    pub const ALL: [SnippetType; 6] = [
        SnippetType::Function,
        SnippetType::Class,
        SnippetType::Method,
        SnippetType::Import,
        SnippetType::Assignment,
        SnippetType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SnippetType::Function => "FUNCTION",
            SnippetType::Class => "CLASS",
            SnippetType::Method => "METHOD",
            SnippetType::Import => "IMPORT",
            SnippetType::Assignment => "ASSIGNMENT",
            SnippetType::Other => "OTHER",
        }
    }

    /// Definitions carry a signature and can be shown as prototypes.
    pub fn is_definition(self) -> bool {
        matches!(
            self,
            SnippetType::Function | SnippetType::Class | SnippetType::Method
        )
    }
}

impl fmt::Display for SnippetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown snippet type `{0}`")]
pub struct UnknownSnippetType(pub String);

impl FromStr for SnippetType {
    type Err = UnknownSnippetType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FUNCTION" | "FUNC" | "DEF" => Ok(SnippetType::Function),
            "CLASS" => Ok(SnippetType::Class),
            "METHOD" => Ok(SnippetType::Method),
            "IMPORT" => Ok(SnippetType::Import),
            "ASSIGNMENT" | "ASSIGN" => Ok(SnippetType::Assignment),
            "OTHER" => Ok(SnippetType::Other),
            _ => Err(UnknownSnippetType(s.to_string())),
        }
    }
}

/// One indexed code block. Field order matches the `documents.jsonl` schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetDocument {
    pub id: String,
    #[serde(rename = "type")]
    pub snippet_type: SnippetType,
    #[serde(rename = "path")]
    pub file_path: String,
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
    pub prototype: String,
    pub parent_id: Option<String>,
}

impl SnippetDocument {
    pub fn new(
        snippet_type: SnippetType,
        file_path: impl Into<String>,
        start_line: usize,
        end_line: usize,
        text: impl Into<String>,
        prototype: impl Into<String>,
        parent_id: Option<String>,
    ) -> Self {
        let file_path = file_path.into();
        let text = text.into();
        SnippetDocument {
            id: document_id(&file_path, start_line, &text),
            snippet_type,
            file_path,
            start_line,
            end_line,
            text,
            prototype: prototype.into(),
            parent_id,
        }
    }
}

/// Stable id: the first 16 hex digits of sha256(path, start_line, text).
pub fn document_id(path: &str, start_line: usize, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(path.as_bytes());
    hasher.update([0u8]);
    hasher.update(start_line.to_string().as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..8])
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("snippets of type {0} have no prototype")]
pub struct NotPrototypable(pub SnippetType);

/// Render `<signature> (<file_path>)` for a definition.
pub fn snippet_prototype(doc: &SnippetDocument) -> Result<String, NotPrototypable> {
    if !doc.snippet_type.is_definition() {
        return Err(NotPrototypable(doc.snippet_type));
    }
    Ok(format!("{} ({})", doc.prototype, doc.file_path))
}

/// Collapse a possibly multi-line definition header into one line.
pub fn collapse_signature(header: &str) -> String {
    let joined = header.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out = joined
        .replace("( ", "(")
        .replace(" )", ")")
        .replace("[ ", "[")
        .replace(" ]", "]");
    while out.contains(",)") {
        out = out.replace(",)", ")");
    }
    out
}

/// The verbatim text of 1-based inclusive lines `[start, end]`, joined by `\n`.
///
/// Returns `None` when the range is empty or out of bounds.
pub fn slice_lines(source: &str, start: usize, end: usize) -> Option<String> {
    if start == 0 || end < start || end > line_count(source) {
        return None;
    }
    let lines: Vec<&str> = source
        .split('\n')
        .skip(start - 1)
        .take(end - start + 1)
        .collect();
    Some(lines.join("\n"))
}

/// Number of lines in `source`; a trailing newline does not open a new line.
pub fn line_count(source: &str) -> usize {
    if source.is_empty() {
        return 0;
    }
    let n = source.split('\n').count();
    if source.ends_with('\n') {
        n - 1
    } else {
        n
    }
}
