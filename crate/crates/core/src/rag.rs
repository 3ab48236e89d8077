//! Retrieval-augmented generation over an external knowledge base.
//!
//! Chunks arrive pre-split, are embedded with the engine's current
//! [`EmbeddingModel`] and indexed for BM25. Retrieval is sparse, dense or a
//! reciprocal-rank fusion of both. Generation goes through the [`Generator`]
//! trait; the built-in [`ExtractiveGenerator`] returns a sentence copied from
//! the retrieved context. Forgetting a chunk rebuilds the chunk index so the
//! knowledge base behaves as if the chunk had never been ingested.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::short_id;
use crate::embeddings::EmbeddingModel;
use crate::error::{Error, Result};
use crate::index::InvertedIndex;
use crate::ranking::{self, cosine_dense, Bm25Params, RankModel, RankParams};
use crate::text::{tokenize, Document, PipelineConfig};

/// Reciprocal-rank fusion constant.
pub const RRF_K: f64 = 60.0;

pub const NO_CONTEXT_ANSWER: &str = "no supporting context";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: String,
    pub source_doc_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Sparse,
    Dense,
    Hybrid,
}

impl FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" => Ok(Self::Sparse),
            "dense" => Ok(Self::Dense),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::InvalidArgument(format!("unknown retrieval mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FusionMode {
    Early,
    Late,
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "early" => Ok(Self::Early),
            "late" => Ok(Self::Late),
            other => Err(Error::InvalidArgument(format!("unknown fusion mode `{other}`"))),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Early => "EARLY",
            Self::Late => "LATE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagResponse {
    pub query: String,
    pub retrieved: Vec<Retrieved>,
    pub fusion_mode: FusionMode,
    pub answer: String,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRejection {
    /// Position in the ingest batch.
    pub ordinal: usize,
    pub source_doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub ingested: Vec<KnowledgeChunk>,
    pub rejected: Vec<ChunkRejection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgetSelector {
    ChunkIds(Vec<String>),
    /// Every chunk containing this term after normalization.
    Subject(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetOutcome {
    pub removed: Vec<String>,
    pub unknown: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ChunkRecord {
    source_doc_id: String,
    text: String,
}

/// Read line-delimited `{"source_doc_id", "text"}` chunk records; blank
/// lines are skipped.
pub fn read_chunks<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ChunkRecord = serde_json::from_str(&line).map_err(|e| Error::Input {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push((record.source_doc_id, record.text));
    }
    Ok(out)
}

/// Deterministic content-addressed chunk id.
pub fn chunk_id(source_doc_id: &str, text: &str) -> String {
    format!("chk-{}", short_id([source_doc_id, text], 16))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    chunks: BTreeMap<String, KnowledgeChunk>,
    /// BM25 index keyed by chunk id; rebuilt on every mutation.
    index: InvertedIndex,
    model: EmbeddingModel,
    pipeline: PipelineConfig,
    bm25: Bm25Params,
}

impl KnowledgeBase {
    pub fn new(model: EmbeddingModel, pipeline: PipelineConfig, bm25: Bm25Params) -> Self {
        Self {
            chunks: BTreeMap::new(),
            index: InvertedIndex::default(),
            model,
            pipeline,
            bm25,
        }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> impl Iterator<Item = &KnowledgeChunk> + '_ {
        self.chunks.values()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&KnowledgeChunk> {
        self.chunks.get(chunk_id)
    }

    pub fn source_of(&self, chunk_id: &str) -> Option<&str> {
        self.chunks.get(chunk_id).map(|c| c.source_doc_id.as_str())
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    /// Replace the embedding model and re-embed every chunk.
    pub fn set_model(&mut self, model: EmbeddingModel) {
        self.model = model;
        for chunk in self.chunks.values_mut() {
            chunk.embedding = self.model.embed_tokens(&chunk.tokens);
        }
    }

    /// Add `(source_doc_id, text)` chunks. Empty (or token-less) texts are
    /// rejected individually; re-ingesting an existing chunk is a no-op that
    /// returns the stored chunk.
    pub fn ingest<I, A, B>(&mut self, items: I) -> IngestOutcome
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut outcome = IngestOutcome::default();
        for (ordinal, (source, text)) in items.into_iter().enumerate() {
            let (source, text) = (source.into(), text.into());
            let tokens = tokenize(&text, &self.pipeline);
            if tokens.is_empty() {
                outcome.rejected.push(ChunkRejection {
                    ordinal,
                    source_doc_id: source,
                    reason: "chunk text is empty".into(),
                });
                continue;
            }
            let id = chunk_id(&source, &text);
            let embedding = self.model.embed_tokens(&tokens);
            let chunk = self.chunks.entry(id.clone()).or_insert(KnowledgeChunk {
                chunk_id: id,
                source_doc_id: source,
                text,
                tokens,
                embedding,
            });
            outcome.ingested.push(chunk.clone());
        }
        self.reindex();
        outcome
    }

    pub(crate) fn reject(outcome: &mut IngestOutcome, ordinal: usize, source: String, reason: &str) {
        outcome.rejected.push(ChunkRejection {
            ordinal,
            source_doc_id: source,
            reason: reason.into(),
        });
    }

    fn reindex(&mut self) {
        let docs: Vec<Document> = self
            .chunks
            .values()
            .map(|c| Document {
                doc_id: c.chunk_id.clone(),
                raw_text: String::new(),
                tokens: c.tokens.clone(),
            })
            .collect();
        self.index = InvertedIndex::build(&docs).expect("chunk ids are unique map keys");
    }

    pub fn retrieve(&self, query: &str, mode: RetrievalMode, top_n: usize) -> Vec<Retrieved> {
        if top_n == 0 {
            return Vec::new();
        }
        let terms = tokenize(query, &self.pipeline);
        let mut out = match mode {
            RetrievalMode::Sparse => self.sparse(&terms),
            RetrievalMode::Dense => self.dense(&terms),
            RetrievalMode::Hybrid => {
                let mut fused: BTreeMap<String, f64> = BTreeMap::new();
                for list in [self.sparse(&terms), self.dense(&terms)] {
                    for (rank, r) in list.into_iter().enumerate() {
                        *fused.entry(r.chunk_id).or_default() += 1.0 / (RRF_K + (rank + 1) as f64);
                    }
                }
                let mut v: Vec<Retrieved> = fused
                    .into_iter()
                    .map(|(chunk_id, score)| Retrieved { chunk_id, score })
                    .collect();
                sort_retrieved(&mut v);
                v
            }
        };
        out.truncate(top_n);
        out
    }

    fn sparse(&self, terms: &[String]) -> Vec<Retrieved> {
        let params = RankParams {
            bm25: self.bm25,
            ..RankParams::default()
        };
        ranking::rank(terms, &self.index, RankModel::Bm25, &params, usize::MAX)
            .expect("bm25 is a sparse model")
            .into_iter()
            .map(|h| Retrieved {
                chunk_id: h.doc_id,
                score: h.score,
            })
            .collect()
    }

    fn dense(&self, terms: &[String]) -> Vec<Retrieved> {
        let qv = self.model.embed_tokens(terms);
        if qv.iter().all(|x| *x == 0.0) {
            return Vec::new();
        }
        let mut v: Vec<Retrieved> = self
            .chunks
            .values()
            .filter(|c| c.embedding.iter().any(|x| *x != 0.0))
            .map(|c| Retrieved {
                chunk_id: c.chunk_id.clone(),
                score: cosine_dense(&qv, &c.embedding),
            })
            .collect();
        sort_retrieved(&mut v);
        v
    }

    /// Retrieve, then generate with the chosen fusion strategy.
    pub fn answer(
        &self,
        query: &str,
        mode: RetrievalMode,
        fusion: FusionMode,
        top_n: usize,
        generator: &dyn Generator,
    ) -> Result<RagResponse> {
        let retrieved = self.retrieve(query, mode, top_n);
        if retrieved.is_empty() {
            return Ok(RagResponse {
                query: query.to_string(),
                retrieved,
                fusion_mode: fusion,
                answer: NO_CONTEXT_ANSWER.into(),
                provenance: Vec::new(),
            });
        }
        let passages: Vec<Passage<'_>> = retrieved
            .iter()
            .map(|r| Passage {
                chunk_id: &r.chunk_id,
                text: &self.chunks[&r.chunk_id].text,
                score: r.score,
            })
            .collect();
        let generation = match fusion {
            FusionMode::Early => generator.generate(query, &passages, None)?,
            FusionMode::Late => {
                let draft = generator.generate(query, &[], None)?;
                generator.generate(query, &passages, Some(&draft.text))?
            }
        };
        let retrieved_ids: BTreeSet<&str> = retrieved.iter().map(|r| r.chunk_id.as_str()).collect();
        let mut provenance: Vec<String> = generation
            .used
            .into_iter()
            .filter(|id| retrieved_ids.contains(id.as_str()))
            .collect();
        provenance.dedup();
        Ok(RagResponse {
            query: query.to_string(),
            retrieved,
            fusion_mode: fusion,
            answer: generation.text,
            provenance,
        })
    }

    pub fn forget(&mut self, selector: &ForgetSelector) -> ForgetOutcome {
        let mut outcome = ForgetOutcome::default();
        match selector {
            ForgetSelector::ChunkIds(ids) => {
                for id in ids {
                    if self.chunks.remove(id).is_some() {
                        outcome.removed.push(id.clone());
                    } else {
                        outcome.unknown.push(id.clone());
                    }
                }
            }
            ForgetSelector::Subject(subject) => {
                let terms = tokenize(subject, &self.pipeline);
                let doomed: Vec<String> = self
                    .chunks
                    .values()
                    .filter(|c| terms.iter().any(|t| c.tokens.contains(t)))
                    .map(|c| c.chunk_id.clone())
                    .collect();
                for id in doomed {
                    self.chunks.remove(&id);
                    outcome.removed.push(id);
                }
            }
        }
        if !outcome.removed.is_empty() {
            self.reindex();
        }
        outcome
    }

    /// Forget every chunk whose source document is in `sources`.
    pub fn forget_sources(&mut self, sources: &BTreeSet<String>) -> Vec<String> {
        let ids: Vec<String> = self
            .chunks
            .values()
            .filter(|c| sources.contains(&c.source_doc_id))
            .map(|c| c.chunk_id.clone())
            .collect();
        self.forget(&ForgetSelector::ChunkIds(ids)).removed
    }
}

fn sort_retrieved(v: &mut [Retrieved]) {
    v.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passage<'a> {
    pub chunk_id: &'a str,
    pub text: &'a str,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    /// Chunk ids the text was drawn from.
    pub used: Vec<String>,
}

pub trait Generator {
    /// `context` is empty for the first call of late fusion; `draft` is the
    /// output of that call during refinement.
    fn generate(&self, query: &str, context: &[Passage<'_>], draft: Option<&str>) -> Result<Generation>;
}

/// Returns the context sentence covering the most distinct query terms;
/// ties go to the earlier (higher-ranked) passage, then the earlier sentence.
#[derive(Debug, Clone, Default)]
pub struct ExtractiveGenerator {
    pub pipeline: PipelineConfig,
}

impl ExtractiveGenerator {
    pub fn new(pipeline: PipelineConfig) -> Self {
        Self { pipeline }
    }
}

/// Split on `.`, `!` and `?`, keeping the terminator.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let s = text[start..i + c.len_utf8()].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + c.len_utf8();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

impl Generator for ExtractiveGenerator {
    fn generate(&self, query: &str, context: &[Passage<'_>], _draft: Option<&str>) -> Result<Generation> {
        let query_terms: BTreeSet<String> = tokenize(query, &self.pipeline).into_iter().collect();
        let mut best: Option<(usize, &str, &str)> = None;
        for p in context {
            for sentence in split_sentences(p.text) {
                let toks: BTreeSet<String> = tokenize(sentence, &self.pipeline).into_iter().collect();
                let overlap = query_terms.intersection(&toks).count();
                if best.is_none_or(|(b, _, _)| overlap > b) {
                    best = Some((overlap, sentence, p.chunk_id));
                }
            }
        }
        Ok(match best {
            Some((_, sentence, id)) => Generation {
                text: sentence.to_string(),
                used: vec![id.to_string()],
            },
            None => Generation {
                text: NO_CONTEXT_ANSWER.into(),
                used: Vec::new(),
            },
        })
    }
}

/// Wire format of the remote generator adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub context: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub text: String,
}

/// Calls an external generator with `POST <url>` and a JSON body
/// `{"context", "query"}`, expecting `{"text"}` back. Provenance is every
/// passage sent.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    pub url: String,
}

impl RemoteGenerator {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into() }
    }

    pub fn build_request(query: &str, context: &[Passage<'_>], draft: Option<&str>) -> RemoteRequest {
        let mut parts: Vec<String> = Vec::new();
        if let Some(d) = draft {
            parts.push(format!("Draft answer: {d}"));
        }
        parts.extend(context.iter().map(|p| p.text.to_string()));
        RemoteRequest {
            context: parts.join("\n\n"),
            query: query.to_string(),
        }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, query: &str, context: &[Passage<'_>], draft: Option<&str>) -> Result<Generation> {
        let body = Self::build_request(query, context, draft);
        let response: RemoteResponse = ureq::post(&self.url)
            .send_json(&body)
            .map_err(|e| Error::Generator(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Generator(e.to_string()))?;
        Ok(Generation {
            text: response.text,
            used: context.iter().map(|p| p.chunk_id.to_string()).collect(),
        })
    }
}
