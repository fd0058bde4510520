//! Boolean field search over indexed snippets.

pub mod engine;
pub mod query;
pub mod tokenize;

pub use engine::{execute_query, rerank, tier_for, RankedHit, SearchIndex, SearchResults, DEFAULT_MATCH_LIMIT};
pub use query::{parse_query, Field, QueryAst, QuerySyntaxError};
