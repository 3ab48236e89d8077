//! Positional inverted index with a tombstone overlay.
//!
//! Tombstoned documents stay in the postings until [`InvertedIndex::compact`]
//! runs, but every read path filters them out and the collection statistics
//! (`n`, `avglen`, document frequency) are computed over live documents only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Document, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostingsEntry {
    pub doc_id: String,
    /// 1-based, strictly increasing.
    pub positions: Vec<usize>,
}

impl PostingsEntry {
    pub fn tf(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// Each list is ordered by `doc_id`.
    postings: BTreeMap<String, Vec<PostingsEntry>>,
    /// Document length in tokens.
    doc_table: BTreeMap<String, usize>,
    tombstones: BTreeSet<String>,
}

impl InvertedIndex {
    pub fn build<'a, I>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut postings: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        let mut doc_table = BTreeMap::new();
        for doc in corpus {
            if doc_table.insert(doc.doc_id.clone(), doc.len()).is_some() {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
            for (i, term) in doc.tokens.iter().enumerate() {
                postings
                    .entry(term.clone())
                    .or_default()
                    .entry(doc.doc_id.clone())
                    .or_default()
                    .push(i + 1);
            }
        }
        let postings = postings
            .into_iter()
            .map(|(term, docs)| {
                let list = docs
                    .into_iter()
                    .map(|(doc_id, positions)| PostingsEntry { doc_id, positions })
                    .collect();
                (term, list)
            })
            .collect();
        Ok(Self {
            postings,
            doc_table,
            tombstones: BTreeSet::new(),
        })
    }

    pub fn is_live(&self, doc_id: &str) -> bool {
        self.doc_table.contains_key(doc_id) && !self.tombstones.contains(doc_id)
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.doc_table.contains_key(doc_id)
    }

    /// Live postings for `term`; empty for unknown terms.
    pub fn lookup(&self, term: &str) -> Vec<&PostingsEntry> {
        self.postings
            .get(term)
            .map(|list| list.iter().filter(|e| !self.tombstones.contains(&e.doc_id)).collect())
            .unwrap_or_default()
    }

    /// Live postings for `term` as an owned list.
    pub fn lookup_owned(&self, term: &str) -> Vec<PostingsEntry> {
        self.lookup(term).into_iter().cloned().collect()
    }

    pub fn positions(&self, term: &str, doc_id: &str) -> Option<&[usize]> {
        if self.tombstones.contains(doc_id) {
            return None;
        }
        let list = self.postings.get(term)?;
        list.binary_search_by(|e| e.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| list[i].positions.as_slice())
    }

    pub fn tf(&self, term: &str, doc_id: &str) -> usize {
        self.positions(term, doc_id).map_or(0, <[usize]>::len)
    }

    /// Number of live documents containing `term`.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |list| {
            list.iter()
                .filter(|e| !self.tombstones.contains(&e.doc_id))
                .count()
        })
    }

    /// Live document count.
    pub fn n(&self) -> usize {
        self.doc_table.len() - self.tombstones.len()
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        if self.tombstones.contains(doc_id) {
            return None;
        }
        self.doc_table.get(doc_id).copied()
    }

    pub fn total_live_tokens(&self) -> usize {
        self.live_docs().map(|(_, len)| len).sum()
    }

    /// Mean live document length; 0 for an empty live set.
    pub fn avglen(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            0.0
        } else {
            self.total_live_tokens() as f64 / n as f64
        }
    }

    /// Live `(doc_id, length)` pairs in `doc_id` order.
    pub fn live_docs(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.doc_table
            .iter()
            .filter(|(id, _)| !self.tombstones.contains(*id))
            .map(|(id, len)| (id.as_str(), *len))
    }

    pub fn live_doc_ids(&self) -> BTreeSet<String> {
        self.live_docs().map(|(id, _)| id.to_string()).collect()
    }

    /// Terms with at least one live posting, in lexicographic order.
    pub fn live_terms(&self) -> impl Iterator<Item = &str> + '_ {
        self.postings
            .iter()
            .filter(|(_, list)| list.iter().any(|e| !self.tombstones.contains(&e.doc_id)))
            .map(|(t, _)| t.as_str())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_terms(self.live_terms())
    }

    /// Iterate all `(term, live postings)` pairs in term order, skipping terms
    /// whose postings are all tombstoned.
    pub fn iter_live(&self) -> impl Iterator<Item = (&str, Vec<&PostingsEntry>)> + '_ {
        self.postings.iter().filter_map(|(term, list)| {
            let live: Vec<&PostingsEntry> = list
                .iter()
                .filter(|e| !self.tombstones.contains(&e.doc_id))
                .collect();
            (!live.is_empty()).then_some((term.as_str(), live))
        })
    }

    pub fn tombstones(&self) -> &BTreeSet<String> {
        &self.tombstones
    }

    /// Hide `doc_id` from every read path. Returns false if it was already
    /// tombstoned.
    pub fn tombstone(&mut self, doc_id: &str) -> Result<bool> {
        if !self.doc_table.contains_key(doc_id) {
            return Err(Error::not_found("document", doc_id));
        }
        Ok(self.tombstones.insert(doc_id.to_string()))
    }

    /// Physically drop tombstoned documents from postings and the doc table.
    pub fn compact(&mut self) {
        if self.tombstones.is_empty() {
            return;
        }
        let dead = std::mem::take(&mut self.tombstones);
        self.postings.retain(|_, list| {
            list.retain(|e| !dead.contains(&e.doc_id));
            !list.is_empty()
        });
        self.doc_table.retain(|id, _| !dead.contains(id));
    }
}
