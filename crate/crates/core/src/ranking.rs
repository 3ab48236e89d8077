//! Graded relevance: TF-IDF cosine (vector space), the binary probabilistic
//! relevance model, and BM25.
//!
//! All scorers read collection statistics from the live view of an
//! [`InvertedIndex`], so tombstoned documents affect neither results nor
//! `n`, `avglen` or document frequencies.
//!
//! Rankers score the candidate set: live documents containing at least one
//! query term. Documents sharing no term with the query are not listed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::InvertedIndex;

pub type SparseVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankModel {
    Vsm,
    Prm,
    Bm25,
    Dense,
}

impl FromStr for RankModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vsm" => Ok(Self::Vsm),
            "prm" => Ok(Self::Prm),
            "bm25" => Ok(Self::Bm25),
            "dense" => Ok(Self::Dense),
            other => Err(Error::InvalidArgument(format!("unknown ranking model `{other}`"))),
        }
    }
}

impl fmt::Display for RankModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Vsm => "vsm",
            Self::Prm => "prm",
            Self::Bm25 => "bm25",
            Self::Dense => "dense",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
    pub model: RankModel,
}

/// Score descending, then `doc_id` ascending.
pub fn hit_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

pub(crate) fn finish(mut hits: Vec<ScoredHit>, top_k: usize) -> Vec<ScoredHit> {
    hits.sort_by(hit_order);
    hits.truncate(top_k);
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::InvalidArgument(format!("k1 must be >= 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidArgument(format!("b must be in [0, 1], got {b}")));
        }
        Ok(Self { k1, b })
    }
}

/// Prior probability of relevance `P(R=1 | D)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub enum RelevancePrior {
    /// `1 / n` over live documents.
    #[default]
    Uniform,
    /// Explicit per-document priors in `(0, 1]`; unlisted documents fall back to uniform.
    PerDocument(BTreeMap<String, f64>),
}

impl RelevancePrior {
    pub fn log_prior(&self, doc_id: &str, n: usize) -> f64 {
        let uniform = if n == 0 { 1.0 } else { 1.0 / n as f64 };
        match self {
            Self::Uniform => uniform.ln(),
            Self::PerDocument(map) => map.get(doc_id).copied().unwrap_or(uniform).ln(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankParams {
    pub bm25: Bm25Params,
    pub prior: RelevancePrior,
}

/// `ln(n / df)`, or 0 when the term is absent.
pub fn idf_ln(n: usize, df: usize) -> f64 {
    if df == 0 || n == 0 {
        0.0
    } else {
        (n as f64 / df as f64).ln()
    }
}

/// `ln((n - df + 0.5) / (df + 0.5) + 1)`; never negative.
pub fn bm25_idf(n: usize, df: usize) -> f64 {
    let (n, df) = (n as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// Robertson/Sparck-Jones relevance weight without relevance judgements.
pub fn rsj_weight(n: usize, df: usize) -> f64 {
    let (n, df) = (n as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5)).ln()
}

pub fn tfidf_weight(term: &str, doc_id: &str, index: &InvertedIndex) -> f64 {
    let tf = index.tf(term, doc_id);
    if tf == 0 {
        return 0.0;
    }
    tf as f64 * idf_ln(index.n(), index.df(term))
}

/// Cosine of two sparse vectors; 0 if either is the zero vector.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, x)| large.get(k).map(|y| x * y))
        .sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine of two dense vectors of equal length; 0 if either is zero.
pub fn cosine_dense(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn unique_terms(query: &[String]) -> BTreeSet<&str> {
    query.iter().map(String::as_str).collect()
}

/// Live documents containing at least one of `terms`.
fn candidates<'a>(terms: impl IntoIterator<Item = &'a str>, index: &InvertedIndex) -> BTreeSet<String> {
    terms
        .into_iter()
        .flat_map(|t| index.lookup(t))
        .map(|e| e.doc_id.clone())
        .collect()
}

/// TF-IDF query vector: query term counts times `ln(n / df)`.
pub fn query_vector(query: &[String], index: &InvertedIndex) -> SparseVector {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in query {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let n = index.n();
    counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), c as f64 * idf_ln(n, index.df(t))))
        .filter(|(_, w)| *w != 0.0)
        .collect()
}

/// TF-IDF document vector over the live index.
pub fn document_vector(doc_id: &str, index: &InvertedIndex) -> SparseVector {
    let n = index.n();
    index
        .iter_live()
        .filter_map(|(term, list)| {
            let entry = list.iter().find(|e| e.doc_id == doc_id)?;
            let w = entry.tf() as f64 * idf_ln(n, list.len());
            (w != 0.0).then(|| (term.to_string(), w))
        })
        .collect()
}

pub fn rank_vsm(query: &[String], index: &InvertedIndex, top_k: usize) -> Vec<ScoredHit> {
    let qv = query_vector(query, index);
    let cands = candidates(unique_terms(query), index);
    rank_vsm_vector(&qv, &cands, index, top_k)
}

/// Cosine ranking of `cands` against an explicit query vector.
pub fn rank_vsm_vector(
    qv: &SparseVector,
    cands: &BTreeSet<String>,
    index: &InvertedIndex,
    top_k: usize,
) -> Vec<ScoredHit> {
    if top_k == 0 || cands.is_empty() {
        return Vec::new();
    }
    let n = index.n();
    let q_norm = qv.values().map(|w| w * w).sum::<f64>().sqrt();

    // One pass over the live postings accumulates document norms and dot products.
    let mut norm_sq: BTreeMap<&str, f64> = BTreeMap::new();
    let mut dot: BTreeMap<&str, f64> = BTreeMap::new();
    for (term, list) in index.iter_live() {
        let idf = idf_ln(n, list.len());
        let qw = qv.get(term).copied();
        for e in list {
            if !cands.contains(&e.doc_id) {
                continue;
            }
            let w = e.tf() as f64 * idf;
            *norm_sq.entry(&e.doc_id).or_default() += w * w;
            if let Some(qw) = qw {
                *dot.entry(&e.doc_id).or_default() += w * qw;
            }
        }
    }

    let hits = cands
        .iter()
        .map(|doc_id| {
            let d_norm = norm_sq.get(doc_id.as_str()).copied().unwrap_or(0.0).sqrt();
            let score = if q_norm == 0.0 || d_norm == 0.0 {
                0.0
            } else {
                dot.get(doc_id.as_str()).copied().unwrap_or(0.0) / (q_norm * d_norm)
            };
            ScoredHit {
                doc_id: doc_id.clone(),
                score,
                model: RankModel::Vsm,
            }
        })
        .collect();
    finish(hits, top_k)
}

/// Log-space binary independence score: `ln P(R=1|D)` plus the RSJ weight of
/// every distinct query term present in the document.
pub fn prm_score(query: &[String], doc_id: &str, index: &InvertedIndex, prior: &RelevancePrior) -> f64 {
    let n = index.n();
    let mut score = prior.log_prior(doc_id, n);
    for term in unique_terms(query) {
        if index.tf(term, doc_id) > 0 {
            score += rsj_weight(n, index.df(term));
        }
    }
    score
}

pub fn bm25_term(tf: usize, doc_len: usize, avglen: f64, idf: f64, params: &Bm25Params) -> f64 {
    if tf == 0 {
        return 0.0;
    }
    let tf = tf as f64;
    let norm = 1.0 - params.b + params.b * doc_len as f64 / avglen;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

pub fn bm25_score(query: &[String], doc_id: &str, index: &InvertedIndex, params: &Bm25Params) -> f64 {
    let Some(len) = index.doc_len(doc_id) else {
        return 0.0;
    };
    let avglen = index.avglen();
    if avglen == 0.0 {
        return 0.0;
    }
    let n = index.n();
    unique_terms(query)
        .into_iter()
        .map(|t| {
            let tf = index.tf(t, doc_id);
            if tf == 0 {
                0.0
            } else {
                bm25_term(tf, len, avglen, bm25_idf(n, index.df(t)), params)
            }
        })
        .sum()
}

/// Dispatch over the sparse rankers. Dense ranking needs an embedding model
/// and is served by [`crate::engine::Engine::rank`].
pub fn rank(
    query: &[String],
    index: &InvertedIndex,
    model: RankModel,
    params: &RankParams,
    top_k: usize,
) -> Result<Vec<ScoredHit>> {
    let score_each = |f: &dyn Fn(&str) -> f64| -> Vec<ScoredHit> {
        candidates(unique_terms(query), index)
            .into_iter()
            .map(|doc_id| ScoredHit {
                score: f(&doc_id),
                doc_id,
                model,
            })
            .collect()
    };
    if top_k == 0 {
        return Ok(Vec::new());
    }
    let hits = match model {
        RankModel::Vsm => return Ok(rank_vsm(query, index, top_k)),
        RankModel::Prm => score_each(&|d| prm_score(query, d, index, &params.prior)),
        RankModel::Bm25 => score_each(&|d| bm25_score(query, d, index, &params.bm25)),
        RankModel::Dense => {
            return Err(Error::InvalidArgument(
                "dense ranking requires an embedding model".into(),
            ))
        }
    };
    Ok(finish(hits, top_k))
}
