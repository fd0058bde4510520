//! Code-use agent engine.
//!
//! An agent answers a query about an unfamiliar Python repository by
//! alternating between boolean code search over an index of snippets and
//! code execution in a persistent interpreter. This crate holds the indexer,
//! the search engine, both environments, the episode loop, the LLM gateway,
//! and the tool-use metrics used to score finished episodes.

pub mod cli;
pub mod config;
pub mod eval;
pub mod execution;
pub mod export;
pub mod indexer;
pub mod llm;
pub mod orchestrator;
pub mod retrieval;
pub mod search;
pub mod snippet;

pub use indexer::{index_repository, parse_file, IndexError, IndexManifest, IndexOptions};
pub use snippet::{snippet_prototype, SnippetDocument, SnippetType};
