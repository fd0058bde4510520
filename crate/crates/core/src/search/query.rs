//! Boolean field queries.
//!
//! ```text
//! query  := clause (("AND" | "OR") clause)*
//! clause := ["NOT"] ( "(" query ")" | [field ":"] term )
//! term   := identifier | "quoted phrase"
//! ```
//!
//! AND binds tighter than OR. Bare terms search the `text` field.

use std::fmt;

use thiserror::Error;

use super::tokenize::part_sequence;
use crate::snippet::SnippetType;

pub const MAX_QUERY_DEPTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Text,
    Type,
    Path,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Text => "text",
            Field::Type => "type",
            Field::Path => "path",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryAst {
    /// Single token; lowercased for `text`/`path`, canonical type name for `type`.
    Term(Field, String),
    /// Consecutive token parts; only valid for `text` and `path`.
    Phrase(Field, Vec<String>),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
    Not(Box<QueryAst>),
}

impl QueryAst {
    pub fn term(field: Field, value: &str) -> Self {
        QueryAst::Term(field, value.to_lowercase())
    }

    pub fn type_term(ty: SnippetType) -> Self {
        QueryAst::Term(Field::Type, ty.as_str().to_string())
    }

    pub fn depth(&self) -> usize {
        match self {
            QueryAst::Term(..) | QueryAst::Phrase(..) => 1,
            QueryAst::Not(c) => 1 + c.depth(),
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                1 + cs.iter().map(QueryAst::depth).max().unwrap_or(0)
            }
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryAst::Term(field, v) => write!(f, "{}:{}", field.as_str(), v),
            QueryAst::Phrase(field, parts) => write!(f, "{}:\"{}\"", field.as_str(), parts.join(" ")),
            QueryAst::Not(c) => write!(f, "NOT {c}"),
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                let op = if matches!(self, QueryAst::And(_)) { " AND " } else { " OR " };
                f.write_str("(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("query syntax error at offset {offset}: {message}")]
pub struct QuerySyntaxError {
    /// Character offset into the raw query.
    pub offset: usize,
    pub message: String,
}

fn syntax(offset: usize, message: impl Into<String>) -> QuerySyntaxError {
    QuerySyntaxError {
        offset,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Field(String),
    Word(String),
    Quoted(String),
}

fn lex(raw: &str) -> Result<Vec<(usize, Tok)>, QuerySyntaxError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut toks = Vec::new();
    let mut open = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            open.push(i);
            toks.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' {
            if open.pop().is_none() {
                return Err(syntax(i, "unbalanced parenthesis: `)` without matching `(`"));
            }
            toks.push((i, Tok::RParen));
            i += 1;
        } else if c == '"' {
            let start = i;
            i += 1;
            let body_start = i;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i == chars.len() {
                return Err(syntax(start, "unterminated quoted phrase"));
            }
            toks.push((start, Tok::Quoted(chars[body_start..i].iter().collect())));
            i += 1;
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let mut j = i;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j] == ':' {
                toks.push((start, Tok::Field(word)));
                i = j + 1;
                continue;
            }
            let tok = match word.as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => Tok::Word(word),
            };
            toks.push((start, tok));
        } else {
            return Err(syntax(
                i,
                format!("unexpected character `{c}`; terms must be identifiers or \"quoted phrases\""),
            ));
        }
    }
    if let Some(&first_unclosed) = open.first() {
        return Err(syntax(first_unclosed, "unbalanced parenthesis: `(` is never closed"));
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn query(&mut self) -> Result<QueryAst, QuerySyntaxError> {
        let mut alternatives = vec![self.conjunction()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            alternatives.push(self.conjunction()?);
        }
        Ok(combine(alternatives, QueryAst::Or))
    }

    fn conjunction(&mut self) -> Result<QueryAst, QuerySyntaxError> {
        let mut parts = vec![self.clause()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            parts.push(self.clause()?);
        }
        Ok(combine(parts, QueryAst::And))
    }

    fn clause(&mut self) -> Result<QueryAst, QuerySyntaxError> {
        let offset = self.offset();
        match self.peek().cloned() {
            None => Err(syntax(offset, "empty clause: expected a term")),
            Some(Tok::Not) => {
                self.pos += 1;
                self.descend(offset)?;
                let inner = self.clause()?;
                self.nesting -= 1;
                Ok(QueryAst::Not(Box::new(inner)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                self.descend(offset)?;
                if self.peek() == Some(&Tok::RParen) {
                    return Err(syntax(self.offset(), "empty clause: `()` contains no query"));
                }
                let inner = self.query()?;
                self.nesting -= 1;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(syntax(self.offset(), "expected AND, OR or `)`")),
                }
            }
            Some(Tok::Field(name)) => {
                let field = match name.to_ascii_lowercase().as_str() {
                    "text" => Field::Text,
                    "type" => Field::Type,
                    "path" => Field::Path,
                    _ => {
                        return Err(syntax(
                            offset,
                            format!("unknown field `{name}`; expected text, type or path"),
                        ))
                    }
                };
                self.pos += 1;
                self.term(field)
            }
            Some(Tok::Word(_)) | Some(Tok::Quoted(_)) => self.term(Field::Text),
            Some(Tok::RParen) | Some(Tok::And) | Some(Tok::Or) => {
                Err(syntax(offset, "empty clause: expected a term"))
            }
        }
    }

    fn descend(&mut self, offset: usize) -> Result<(), QuerySyntaxError> {
        self.nesting += 1;
        if self.nesting > MAX_QUERY_DEPTH {
            return Err(syntax(offset, format!("query nests deeper than {MAX_QUERY_DEPTH} levels")));
        }
        Ok(())
    }

    fn term(&mut self, field: Field) -> Result<QueryAst, QuerySyntaxError> {
        let offset = self.offset();
        let tok = self.peek().cloned();
        let quoted = matches!(tok, Some(Tok::Quoted(_)));
        let value = match tok {
            Some(Tok::Word(w)) => w,
            Some(Tok::Quoted(q)) => q,
            _ => {
                return Err(syntax(
                    offset,
                    format!("empty clause: expected a term after `{}:`", field.as_str()),
                ))
            }
        };
        self.pos += 1;
        if field == Field::Type {
            let ty: SnippetType = value.parse().map_err(|_| {
                syntax(
                    offset,
                    format!(
                        "unknown type `{value}`; expected one of FUNCTION, CLASS, METHOD, IMPORT, ASSIGNMENT, OTHER"
                    ),
                )
            })?;
            return Ok(QueryAst::type_term(ty));
        }
        if !quoted {
            return Ok(QueryAst::term(field, &value));
        }
        let parts = part_sequence(&value);
        match parts.len() {
            0 => Err(syntax(offset, "empty clause: quoted phrase has no terms")),
            1 => Ok(QueryAst::Term(field, parts.into_iter().next().unwrap())),
            _ => Ok(QueryAst::Phrase(field, parts)),
        }
    }
}

fn combine(mut items: Vec<QueryAst>, make: fn(Vec<QueryAst>) -> QueryAst) -> QueryAst {
    if items.len() == 1 {
        return items.pop().unwrap();
    }
    let probe = make(Vec::new());
    let mut flat = Vec::with_capacity(items.len());
    for item in items {
        match (&probe, item) {
            (QueryAst::And(_), QueryAst::And(cs)) | (QueryAst::Or(_), QueryAst::Or(cs)) => {
                flat.extend(cs)
            }
            (_, other) => flat.push(other),
        }
    }
    make(flat)
}

/// Parse a raw query string.
pub fn parse_query(raw: &str) -> Result<QueryAst, QuerySyntaxError> {
    if raw.trim().is_empty() {
        return Err(syntax(0, "empty query"));
    }
    let toks = lex(raw)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: raw.chars().count(),
        nesting: 0,
    };
    let ast = parser.query()?;
    if let Some(tok) = parser.peek() {
        let msg = match tok {
            Tok::RParen => "unbalanced parenthesis: unexpected `)`",
            _ => "expected AND or OR between clauses",
        };
        return Err(syntax(parser.offset(), msg));
    }
    if ast.depth() > MAX_QUERY_DEPTH {
        return Err(syntax(0, format!("query nests deeper than {MAX_QUERY_DEPTH} levels")));
    }
    Ok(ast)
}
