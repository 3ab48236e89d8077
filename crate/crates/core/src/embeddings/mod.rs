//! Count-based word and document embeddings.
//!
//! Word vectors come from a rank-`dim` factorization of the PPMI matrix of
//! windowed co-occurrence counts; a document vector is the mean of its
//! in-vocabulary word vectors. Everything is deterministic for a given corpus.

mod attention;
mod cooccur;
mod svd;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use attention::{attention, attention_weights, softmax_rows};
pub use cooccur::{build_cooccurrence, ppmi, CooccurrenceMatrix, PpmiMatrix};
pub use svd::{symmetric_eigen, truncated_svd_symmetric, TruncatedSvd};

use crate::digest::FieldHasher;
use crate::error::{Error, Result};
use crate::ranking::{cosine_dense, finish, RankModel, ScoredHit};
use crate::text::{Document, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub window: usize,
    /// Upper bound; clamped to the vocabulary size when building.
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { window: 2, dim: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub dim: usize,
    /// Indexed by term id.
    pub vectors: Vec<Vec<f64>>,
    /// Digest of the documents the model was built from.
    pub provenance: String,
}

/// Digest over document ids and token sequences, in corpus order.
pub fn corpus_fingerprint<'a, I>(corpus: I) -> String
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut h = FieldHasher::new();
    for doc in corpus {
        h.field(&doc.doc_id);
        h.field(doc.tokens.len().to_le_bytes());
        for t in &doc.tokens {
            h.field(t);
        }
    }
    let mut hex = h.finish_hex();
    hex.truncate(16);
    hex
}

/// Rank-`dim` factorization of a PPMI matrix.
pub fn factorize(matrix: &PpmiMatrix, dim: usize) -> Result<EmbeddingModel> {
    let svd = truncated_svd_symmetric(&matrix.to_dense(), dim)?;
    let scaled = svd.scaled_left();
    let vectors = scaled
        .row_iter()
        .map(|row| row.iter().copied().collect())
        .collect();
    Ok(EmbeddingModel {
        vocab: matrix.vocab.clone(),
        dim,
        vectors,
        provenance: String::new(),
    })
}

impl EmbeddingModel {
    /// A model with no terms; every document embeds to the zero vector.
    pub fn empty(dim: usize) -> Self {
        Self {
            vocab: Vocabulary::default(),
            dim: dim.max(1),
            vectors: Vec::new(),
            provenance: corpus_fingerprint(std::iter::empty()),
        }
    }

    /// Co-occurrence, PPMI and factorization in one step.
    pub fn build<'a, I>(corpus: I, config: &EmbeddingConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let docs: Vec<&Document> = corpus.into_iter().collect();
        let cooc = build_cooccurrence(docs.iter().copied(), config.window)?;
        if cooc.vocab.is_empty() {
            return Ok(Self::empty(config.dim));
        }
        if config.dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
        }
        let dim = config.dim.min(cooc.vocab.len());
        let mut model = factorize(&ppmi(&cooc), dim)?;
        model.provenance = corpus_fingerprint(docs);
        Ok(model)
    }

    pub fn vector(&self, term: &str) -> Option<&[f64]> {
        self.vocab.term_id(term).map(|i| self.vectors[i].as_slice())
    }

    /// Cosine between two in-vocabulary terms.
    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine_dense(self.vector(a)?, self.vector(b)?))
    }

    /// Mean of the in-vocabulary token vectors; zero if none are known.
    pub fn embed_tokens(&self, tokens: &[String]) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        let mut count = 0usize;
        for v in tokens.iter().filter_map(|t| self.vector(t)) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            count += 1;
        }
        if count > 0 {
            for s in &mut sum {
                *s /= count as f64;
            }
        }
        sum
    }

    pub fn doc_embedding(&self, doc: &Document) -> DocEmbedding {
        DocEmbedding {
            doc_id: doc.doc_id.clone(),
            vector: self.embed_tokens(&doc.tokens),
        }
    }

    /// Top-`k` other terms by cosine, ties broken by term.
    pub fn nearest_neighbors(&self, term: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let v = self
            .vector(term)
            .ok_or_else(|| Error::not_found("term", term))?;
        let mut out: Vec<(String, f64)> = self
            .vocab
            .terms()
            .iter()
            .zip(&self.vectors)
            .filter(|(t, _)| t.as_str() != term)
            .map(|(t, w)| (t.clone(), cosine_dense(v, w)))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.truncate(k);
        Ok(out)
    }

    /// One line per term: the term followed by `dim` space-separated floats.
    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (t, v) in self.vocab.terms().iter().zip(&self.vectors) {
            write!(out, "{t}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbedding {
    pub doc_id: String,
    pub vector: Vec<f64>,
}

/// Cosine ranking of document vectors against the embedded query.
///
/// Zero-vector documents, or a zero query, produce no hits.
pub fn rank_dense(
    query: &[String],
    model: &EmbeddingModel,
    doc_vectors: &BTreeMap<String, Vec<f64>>,
    top_k: usize,
) -> Vec<ScoredHit> {
    let qv = model.embed_tokens(query);
    if top_k == 0 || qv.iter().all(|x| *x == 0.0) {
        return Vec::new();
    }
    let hits = doc_vectors
        .iter()
        .filter(|(_, v)| v.iter().any(|x| *x != 0.0))
        .map(|(doc_id, v)| ScoredHit {
            doc_id: doc_id.clone(),
            score: cosine_dense(&qv, v),
            model: RankModel::Dense,
        })
        .collect();
    finish(hits, top_k)
}
