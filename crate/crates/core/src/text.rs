//! Text normalization: raw strings to term sequences, plus corpus vocabulary.
//!
//! The same [`PipelineConfig`] is used for documents, queries, knowledge-base
//! chunks and de-index selectors so that every path sees identical terms.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Suffixes removed by the light stemmer, tried in order.
const STEM_SUFFIXES: [&str; 3] = ["ing", "ed", "s"];
/// A suffix is only removed if at least this many characters remain.
const MIN_STEM_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    /// Compared against the token after case folding.
    pub stop_words: BTreeSet<String>,
    pub stemming: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            stop_words: BTreeSet::new(),
            stemming: false,
        }
    }
}

/// Split `text` into normalized terms.
///
/// Steps: whitespace split, punctuation strip, lowercase fold, stop-word
/// removal, suffix stemming. Tokens that end up empty are dropped.
pub fn tokenize(text: &str, config: &PipelineConfig) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| normalize_token(raw, config))
        .collect()
}

fn normalize_token(raw: &str, config: &PipelineConfig) -> Option<String> {
    let mut token = if config.strip_punctuation {
        strip_punctuation(raw)
    } else {
        raw.to_string()
    };
    if config.lowercase {
        token = token.to_lowercase();
        // Case folding can emit combining marks (e.g. U+0130); strip them again
        // so a second pass over the output is a no-op.
        if config.strip_punctuation {
            token = strip_punctuation(&token);
        }
    }
    if token.is_empty() || config.stop_words.contains(&token) {
        return None;
    }
    if config.stemming {
        token = stem(&token);
        // A stem that collides with a stop word would be dropped on re-tokenization.
        if config.stop_words.contains(&token) {
            return None;
        }
    }
    Some(token)
}

fn strip_punctuation(token: &str) -> String {
    token.chars().filter(|c| c.is_alphanumeric()).collect()
}

/// Repeatedly strip the first matching suffix until none applies.
pub fn stem(token: &str) -> String {
    let mut current = token.to_string();
    'outer: loop {
        for suffix in STEM_SUFFIXES {
            if let Some(base) = current.strip_suffix(suffix) {
                if base.chars().count() >= MIN_STEM_CHARS {
                    current = base.to_string();
                    continue 'outer;
                }
            }
        }
        return current;
    }
}

/// A corpus unit: identified raw text and its term sequence.
///
/// Positions into `tokens` are 1-based throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, raw_text: impl Into<String>, config: &PipelineConfig) -> Self {
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text, config);
        Self {
            doc_id: doc_id.into(),
            raw_text,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sorted set of unique terms with dense ids `0..m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = terms.into_iter().map(Into::into).collect();
        let terms: Vec<String> = set.into_iter().collect();
        let ids = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { terms, ids }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        Vocabulary::from_terms(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.terms
    }
}

pub fn build_vocabulary<'a, I>(corpus: I) -> Vocabulary
where
    I: IntoIterator<Item = &'a Document>,
{
    Vocabulary::from_terms(
        corpus
            .into_iter()
            .flat_map(|d| d.tokens.iter().cloned()),
    )
}

#[derive(Debug, Deserialize)]
struct CorpusRecord {
    doc_id: String,
    text: String,
}

/// Read a line-delimited JSON corpus of `{"doc_id", "text"}` records.
///
/// Blank lines are skipped. Duplicate ids are rejected.
pub fn read_corpus<R: BufRead>(reader: R, config: &PipelineConfig) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Input {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if !seen.insert(record.doc_id.clone()) {
            return Err(Error::DuplicateDocId(record.doc_id));
        }
        docs.push(Document::new(record.doc_id, record.text, config));
    }
    Ok(docs)
}
