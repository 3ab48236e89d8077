//! Boolean query language.
//!
//! ```text
//! or     := and ("OR" and)*
//! and    := unary (["AND"] unary)*        adjacent operands are an implicit AND
//! unary  := "NOT" unary | atom
//! atom   := WORD ["NEAR/k" WORD] | "\"" WORD+ "\"" | "(" or ")"
//! ```
//!
//! Operators are upper-case keywords. Words and phrase contents go through the
//! same text pipeline as documents.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::InvertedIndex;
use crate::text::{tokenize, PipelineConfig};

pub type ResultSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryAst {
    Term(String),
    And(Box<QueryAst>, Box<QueryAst>),
    Or(Box<QueryAst>, Box<QueryAst>),
    Not(Box<QueryAst>),
    /// At least two terms at consecutive positions.
    Phrase(Vec<String>),
    /// Two terms at distinct positions at most `k` apart.
    Near(String, String, usize),
}

impl QueryAst {
    pub fn term(t: impl Into<String>) -> Self {
        Self::Term(t.into())
    }

    pub fn and(a: QueryAst, b: QueryAst) -> Self {
        Self::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: QueryAst, b: QueryAst) -> Self {
        Self::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: QueryAst) -> Self {
        Self::Not(Box::new(a))
    }

    /// Every term mentioned anywhere in the query, including under NOT.
    pub fn terms(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_terms(&mut out);
        out
    }

    fn collect_terms<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Self::Term(t) => {
                out.insert(t);
            }
            Self::And(a, b) | Self::Or(a, b) => {
                a.collect_terms(out);
                b.collect_terms(out);
            }
            Self::Not(a) => a.collect_terms(out),
            Self::Phrase(ts) => out.extend(ts.iter().map(String::as_str)),
            Self::Near(a, b, _) => {
                out.insert(a);
                out.insert(b);
            }
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Term(t) => f.write_str(t),
            Self::And(a, b) => write!(f, "({a} AND {b})"),
            Self::Or(a, b) => write!(f, "({a} OR {b})"),
            Self::Not(a) => write!(f, "NOT {a}"),
            Self::Phrase(ts) => write!(f, "\"{}\"", ts.join(" ")),
            Self::Near(a, b, k) => write!(f, "({a} NEAR/{k} {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Near(usize),
    Word(String),
    Quoted(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            chars.next();
            out.push((pos, Tok::LParen));
        } else if c == ')' {
            chars.next();
            out.push((pos, Tok::RParen));
        } else if c == '"' {
            chars.next();
            let start = pos + 1;
            let mut end = None;
            for (p, c) in chars.by_ref() {
                if c == '"' {
                    end = Some(p);
                    break;
                }
            }
            let end = end.ok_or_else(|| parse_err(pos, "unterminated quote"))?;
            out.push((pos, Tok::Quoted(text[start..end].to_string())));
        } else {
            let mut end = text.len();
            while let Some(&(p, c)) = chars.peek() {
                if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                    end = p;
                    break;
                }
                chars.next();
            }
            let word = &text[pos..end];
            let tok = match word {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                w if w.starts_with("NEAR/") => {
                    let k: usize = w[5..]
                        .parse()
                        .map_err(|_| parse_err(pos, "NEAR/k needs a positive integer k"))?;
                    if k == 0 {
                        return Err(parse_err(pos, "NEAR/k needs k >= 1"));
                    }
                    Tok::Near(k)
                }
                w => Tok::Word(w.to_string()),
            };
            out.push((pos, tok));
        }
    }
    Ok(out)
}

fn parse_err(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    config: &'a PipelineConfig,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn or_expr(&mut self) -> Result<QueryAst> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Tok::Or) {
            self.next();
            let rhs = self.and_expr()?;
            lhs = QueryAst::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<QueryAst> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::And) => {
                    self.next();
                }
                Some(Tok::Word(_) | Tok::Quoted(_) | Tok::LParen | Tok::Not) => {}
                _ => return Ok(lhs),
            }
            let rhs = self.unary()?;
            lhs = QueryAst::and(lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<QueryAst> {
        if self.peek() == Some(&Tok::Not) {
            self.next();
            return Ok(QueryAst::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<QueryAst> {
        let at = self.offset();
        match self.next() {
            Some((p, Tok::Word(w))) => {
                let left = self.normalize_word(p, &w)?;
                if let Some(&Tok::Near(k)) = self.peek() {
                    self.next();
                    let at = self.offset();
                    match self.next() {
                        Some((p, Tok::Word(w))) => {
                            let right = self.normalize_word(p, &w)?;
                            Ok(QueryAst::Near(left, right, k))
                        }
                        _ => Err(parse_err(at, "NEAR/k must be followed by a term")),
                    }
                } else {
                    Ok(QueryAst::Term(left))
                }
            }
            Some((p, Tok::Quoted(s))) => {
                let mut terms = tokenize(&s, self.config);
                match terms.len() {
                    0 => Err(parse_err(p, "empty phrase")),
                    1 => Ok(QueryAst::Term(terms.remove(0))),
                    _ => Ok(QueryAst::Phrase(terms)),
                }
            }
            Some((p, Tok::LParen)) => {
                if self.peek() == Some(&Tok::RParen) {
                    return Err(parse_err(p, "empty parentheses"));
                }
                let inner = self.or_expr()?;
                match self.next() {
                    Some((_, Tok::RParen)) => Ok(inner),
                    _ => Err(parse_err(p, "unbalanced parenthesis")),
                }
            }
            Some((p, Tok::RParen)) => Err(parse_err(p, "unexpected `)`")),
            Some((p, Tok::Near(_))) => Err(parse_err(p, "NEAR/k must follow a term")),
            Some((p, op)) => Err(parse_err(p, format!("dangling operator {op:?}"))),
            None => Err(parse_err(at, "expected a term")),
        }
    }

    fn normalize_word(&self, pos: usize, word: &str) -> Result<String> {
        let mut terms = tokenize(word, self.config);
        if terms.len() != 1 {
            return Err(parse_err(pos, format!("`{word}` does not normalize to a term")));
        }
        Ok(terms.remove(0))
    }
}

/// Parse with the default text pipeline.
pub fn parse_query(text: &str) -> Result<QueryAst> {
    parse_query_with(text, &PipelineConfig::default())
}

pub fn parse_query_with(text: &str, config: &PipelineConfig) -> Result<QueryAst> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(parse_err(0, "empty query"));
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
        config,
    };
    let ast = parser.or_expr()?;
    if let Some((p, t)) = parser.next() {
        let msg = match t {
            Tok::RParen => "unbalanced parenthesis".to_string(),
            other => format!("unexpected token {other:?}"),
        };
        return Err(parse_err(p, msg));
    }
    Ok(ast)
}

/// Set-theoretic evaluation over the live documents of `index`.
pub fn eval_boolean(ast: &QueryAst, index: &InvertedIndex) -> ResultSet {
    match ast {
        QueryAst::Term(t) => docs_with(index, t),
        QueryAst::And(a, b) => {
            let left = eval_boolean(a, index);
            if left.is_empty() {
                return left;
            }
            let right = eval_boolean(b, index);
            left.intersection(&right).cloned().collect()
        }
        QueryAst::Or(a, b) => {
            let mut left = eval_boolean(a, index);
            left.extend(eval_boolean(b, index));
            left
        }
        QueryAst::Not(a) => {
            let inner = eval_boolean(a, index);
            index
                .live_docs()
                .map(|(id, _)| id)
                .filter(|id| !inner.contains(*id))
                .map(String::from)
                .collect()
        }
        QueryAst::Phrase(terms) => {
            let Some((first, rest)) = terms.split_first() else {
                return ResultSet::new();
            };
            let mut cands = docs_with(index, first);
            for t in rest {
                let other = docs_with(index, t);
                cands.retain(|d| other.contains(d));
            }
            cands
                .into_iter()
                .filter(|d| phrase_in_doc(index, terms, d))
                .collect()
        }
        QueryAst::Near(a, b, k) => {
            let right = docs_with(index, b);
            docs_with(index, a)
                .into_iter()
                .filter(|d| right.contains(d))
                .filter(|d| {
                    let pa = index.positions(a, d).unwrap_or_default();
                    let pb = index.positions(b, d).unwrap_or_default();
                    min_gap(pa, pb).is_some_and(|g| g <= *k)
                })
                .collect()
        }
    }
}

fn docs_with(index: &InvertedIndex, term: &str) -> ResultSet {
    index.lookup(term).into_iter().map(|e| e.doc_id.clone()).collect()
}

fn phrase_in_doc(index: &InvertedIndex, terms: &[String], doc: &str) -> bool {
    let lists: Vec<&[usize]> = terms
        .iter()
        .map(|t| index.positions(t, doc).unwrap_or_default())
        .collect();
    lists[0].iter().any(|&start| {
        lists
            .iter()
            .enumerate()
            .skip(1)
            .all(|(i, ps)| ps.binary_search(&(start + i)).is_ok())
    })
}

/// Smallest `|p - q|` over distinct positions, both lists sorted.
fn min_gap(a: &[usize], b: &[usize]) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    let mut best: Option<usize> = None;
    while i < a.len() && j < b.len() {
        let (p, q) = (a[i], b[j]);
        if p != q {
            let g = p.abs_diff(q);
            best = Some(best.map_or(g, |b| b.min(g)));
        }
        if p < q {
            i += 1;
        } else if q < p {
            j += 1;
        } else {
            // same position (same term on both sides): try neighbours
            if i + 1 < a.len() {
                let g = a[i + 1] - q;
                best = Some(best.map_or(g, |b| b.min(g)));
            }
            if j + 1 < b.len() {
                let g = b[j + 1] - p;
                best = Some(best.map_or(g, |b| b.min(g)));
            }
            i += 1;
            j += 1;
        }
    }
    best
}
