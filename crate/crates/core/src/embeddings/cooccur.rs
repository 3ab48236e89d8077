use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{build_vocabulary, Document, Vocabulary};

/// Symmetric windowed co-occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub vocab: Vocabulary,
    /// Both `(i, j)` and `(j, i)` are stored.
    pub counts: BTreeMap<(usize, usize), u64>,
    pub window: usize,
    /// Sum of all stored counts.
    pub total: u64,
}

impl CooccurrenceMatrix {
    pub fn count(&self, a: &str, b: &str) -> u64 {
        match (self.vocab.term_id(a), self.vocab.term_id(b)) {
            (Some(i), Some(j)) => self.counts.get(&(i, j)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Marginal count of term `i` (its row sum).
    pub fn row_sums(&self) -> Vec<u64> {
        let mut sums = vec![0; self.vocab.len()];
        for (&(i, _), &c) in &self.counts {
            sums[i] += c;
        }
        sums
    }
}

/// Count every pair of token positions at distance `1..=window` within a
/// document. Each unordered pair adds one to both `(a, b)` and `(b, a)`.
pub fn build_cooccurrence<'a, I>(corpus: I, window: usize) -> Result<CooccurrenceMatrix>
where
    I: IntoIterator<Item = &'a Document>,
{
    if window == 0 {
        return Err(Error::InvalidArgument("co-occurrence window must be >= 1".into()));
    }
    let docs: Vec<&Document> = corpus.into_iter().collect();
    let vocab = build_vocabulary(docs.iter().copied());
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut total = 0;
    for doc in docs {
        let ids: Vec<usize> = doc
            .tokens
            .iter()
            .map(|t| vocab.term_id(t).expect("vocabulary built from corpus"))
            .collect();
        for (p, &a) in ids.iter().enumerate() {
            for &b in ids.iter().skip(p + 1).take(window) {
                *counts.entry((a, b)).or_default() += 1;
                *counts.entry((b, a)).or_default() += 1;
                total += 2;
            }
        }
    }
    Ok(CooccurrenceMatrix {
        vocab,
        counts,
        window,
        total,
    })
}

/// Sparse positive pointwise mutual information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpmiMatrix {
    pub vocab: Vocabulary,
    /// Only strictly positive entries are stored.
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl PpmiMatrix {
    pub fn get(&self, a: &str, b: &str) -> f64 {
        match (self.vocab.term_id(a), self.vocab.term_id(b)) {
            (Some(i), Some(j)) => self.entries.get(&(i, j)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.vocab.len();
        let mut dense = DMatrix::zeros(m, m);
        for (&(i, j), &v) in &self.entries {
            dense[(i, j)] = v;
        }
        dense
    }
}

/// `max(0, ln(p(i,j) / (p(i) p(j))))` with probabilities from the counts.
pub fn ppmi(cooc: &CooccurrenceMatrix) -> PpmiMatrix {
    let total = cooc.total as f64;
    let sums = cooc.row_sums();
    let entries = cooc
        .counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .filter_map(|(&(i, j), &c)| {
            let pij = c as f64 / total;
            let pi = sums[i] as f64 / total;
            let pj = sums[j] as f64 / total;
            let pmi = (pij / (pi * pj)).ln();
            (pmi > 0.0).then_some(((i, j), pmi))
        })
        .collect();
    PpmiMatrix {
        vocab: cooc.vocab.clone(),
        entries,
    }
}
