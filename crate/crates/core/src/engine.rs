//! The engine: raw document store plus every retrieval structure built over
//! the live (not de-indexed) part of it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::deindex::{Ledger, Tombstone};
use crate::digest::FieldHasher;
use crate::embeddings::{rank_dense, EmbeddingConfig, EmbeddingModel};
use crate::error::{Error, Result};
use crate::index::InvertedIndex;
use crate::matrix::{TermDocumentMatrix, WeightingScheme};
use crate::query::{eval_boolean, parse_query_with, ResultSet};
use crate::rag::{FusionMode, Generator, IngestOutcome, KnowledgeBase, RagResponse, RetrievalMode};
use crate::ranking::{self, Bm25Params, RankModel, RankParams, ScoredHit};
use crate::text::{tokenize, Document, PipelineConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub pipeline: PipelineConfig,
    pub embedding: EmbeddingConfig,
    pub bm25: Bm25Params,
    pub tdm_scheme: WeightingScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Live documents.
    pub n: usize,
    /// Live vocabulary size.
    pub vocab: usize,
    pub avglen: f64,
    pub stored: usize,
    pub tombstones: usize,
    pub deindexed: usize,
    pub kb_chunks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    pub(crate) config: EngineConfig,
    /// Raw documents in corpus order. De-indexing never removes from here;
    /// only a purging compaction does.
    pub(crate) documents: Vec<Document>,
    /// Every document ever removed from retrieval.
    pub(crate) deindexed: BTreeSet<String>,
    pub(crate) index: InvertedIndex,
    pub(crate) tdm: TermDocumentMatrix,
    pub(crate) embeddings: EmbeddingModel,
    pub(crate) doc_vectors: BTreeMap<String, Vec<f64>>,
    pub(crate) kb: KnowledgeBase,
    pub(crate) ledger: Ledger,
    /// Active tombstones, cleared by compaction.
    pub(crate) tombstones: BTreeMap<String, Tombstone>,
}

impl Engine {
    pub fn build(documents: Vec<Document>, config: EngineConfig) -> Result<Self> {
        let index = InvertedIndex::build(&documents)?;
        let tdm = TermDocumentMatrix::build(&documents, config.tdm_scheme);
        let embeddings = EmbeddingModel::build(&documents, &config.embedding)?;
        let kb = KnowledgeBase::new(embeddings.clone(), config.pipeline.clone(), config.bm25);
        let mut engine = Self {
            config,
            documents,
            deindexed: BTreeSet::new(),
            index,
            tdm,
            embeddings,
            doc_vectors: BTreeMap::new(),
            kb,
            ledger: Ledger::default(),
            tombstones: BTreeMap::new(),
        };
        engine.doc_vectors = engine.compute_doc_vectors();
        Ok(engine)
    }

    /// Tokenize `(doc_id, text)` pairs with `config.pipeline` and build.
    pub fn from_texts<I, A, B>(texts: I, config: EngineConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let docs = texts
            .into_iter()
            .map(|(id, text)| Document::new(id, text, &config.pipeline))
            .collect();
        Self::build(docs, config)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn tdm(&self) -> &TermDocumentMatrix {
        &self.tdm
    }

    pub fn embeddings(&self) -> &EmbeddingModel {
        &self.embeddings
    }

    pub fn doc_vectors(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.doc_vectors
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn kb_mut(&mut self) -> &mut KnowledgeBase {
        &mut self.kb
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn tombstones(&self) -> &BTreeMap<String, Tombstone> {
        &self.tombstones
    }

    pub fn deindexed(&self) -> &BTreeSet<String> {
        &self.deindexed
    }

    /// All stored documents, including de-indexed ones.
    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn live_documents(&self) -> impl Iterator<Item = &Document> + '_ {
        self.documents
            .iter()
            .filter(|d| !self.deindexed.contains(&d.doc_id))
    }

    pub fn is_live(&self, doc_id: &str) -> bool {
        self.index.is_live(doc_id)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, &self.config.pipeline)
    }

    pub fn stats(&self) -> Stats {
        Stats {
            n: self.index.n(),
            vocab: self.index.live_terms().count(),
            avglen: self.index.avglen(),
            stored: self.documents.len(),
            tombstones: self.tombstones.len(),
            deindexed: self.deindexed.len(),
            kb_chunks: self.kb.len(),
        }
    }

    pub fn query_boolean(&self, query: &str) -> Result<ResultSet> {
        let ast = parse_query_with(query, &self.config.pipeline)?;
        Ok(eval_boolean(&ast, &self.index))
    }

    /// Rank with the engine's BM25 parameters and a uniform prior.
    pub fn rank(&self, query: &str, model: RankModel, top_k: usize) -> Result<Vec<ScoredHit>> {
        let params = RankParams {
            bm25: self.config.bm25,
            ..RankParams::default()
        };
        self.rank_with(query, model, &params, top_k)
    }

    pub fn rank_with(
        &self,
        query: &str,
        model: RankModel,
        params: &RankParams,
        top_k: usize,
    ) -> Result<Vec<ScoredHit>> {
        let terms = self.tokenize(query);
        self.rank_terms(&terms, model, params, top_k)
    }

    pub fn rank_terms(
        &self,
        terms: &[String],
        model: RankModel,
        params: &RankParams,
        top_k: usize,
    ) -> Result<Vec<ScoredHit>> {
        match model {
            RankModel::Dense => Ok(rank_dense(terms, &self.embeddings, &self.doc_vectors, top_k)),
            sparse => ranking::rank(terms, &self.index, sparse, params, top_k),
        }
    }

    pub fn neighbors(&self, term: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let normalized = self.normalize_term(term)?;
        self.embeddings.nearest_neighbors(&normalized, k)
    }

    /// Rebuild the embedding model (and everything embedded with it) with new
    /// parameters.
    pub fn rebuild_embeddings(&mut self, config: EmbeddingConfig) -> Result<()> {
        self.config.embedding = config;
        self.rebuild_derived()
    }

    /// Normalize a single user-supplied term through the pipeline.
    pub(crate) fn normalize_term(&self, term: &str) -> Result<String> {
        let mut toks = self.tokenize(term);
        if toks.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "`{term}` does not normalize to a single term"
            )));
        }
        Ok(toks.remove(0))
    }

    fn compute_doc_vectors(&self) -> BTreeMap<String, Vec<f64>> {
        self.live_documents()
            .map(|d| (d.doc_id.clone(), self.embeddings.embed_tokens(&d.tokens)))
            .collect()
    }

    /// Rebuild the TDM, embeddings, document vectors and chunk embeddings
    /// over the live corpus.
    pub(crate) fn rebuild_derived(&mut self) -> Result<()> {
        let live: Vec<&Document> = self.live_documents().collect();
        let tdm = TermDocumentMatrix::build(live.iter().copied(), self.config.tdm_scheme);
        let embeddings = EmbeddingModel::build(live, &self.config.embedding)?;
        self.tdm = tdm;
        self.embeddings = embeddings;
        self.doc_vectors = self.compute_doc_vectors();
        self.kb.set_model(self.embeddings.clone());
        Ok(())
    }

    /// Ingest knowledge chunks; chunks citing a de-indexed source document
    /// are rejected.
    pub fn ingest_kb<I, A, B>(&mut self, items: I) -> IngestOutcome
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut accepted = Vec::new();
        let mut blocked = Vec::new();
        for (ordinal, (source, text)) in items.into_iter().enumerate() {
            let (source, text): (String, String) = (source.into(), text.into());
            if self.deindexed.contains(&source) {
                blocked.push((ordinal, source));
            } else {
                accepted.push((ordinal, source, text));
            }
        }
        let ordinals: Vec<usize> = accepted.iter().map(|(o, _, _)| *o).collect();
        let mut outcome = self
            .kb
            .ingest(accepted.into_iter().map(|(_, s, t)| (s, t)));
        for r in &mut outcome.rejected {
            r.ordinal = ordinals[r.ordinal];
        }
        for (ordinal, source) in blocked {
            KnowledgeBase::reject(&mut outcome, ordinal, source, "source document is de-indexed");
        }
        outcome.rejected.sort_by_key(|r| r.ordinal);
        outcome
    }

    pub fn rag_answer(
        &self,
        query: &str,
        mode: RetrievalMode,
        fusion: FusionMode,
        top_n: usize,
        generator: &dyn Generator,
    ) -> Result<RagResponse> {
        self.kb.answer(query, mode, fusion, top_n, generator)
    }

    /// Digest of the retrieval structures only: index, TDM, embeddings,
    /// document vectors and knowledge base. Raw storage and the request
    /// ledger are excluded, so a compacted engine hashes equal to a fresh
    /// build over its live corpus.
    pub fn content_hash(&self) -> String {
        let mut h = FieldHasher::new();
        h.field(json(&self.config));
        h.field(json(&self.index));
        h.field(json(&self.tdm));
        h.field(json(&self.embeddings));
        h.field(json(&self.doc_vectors));
        h.field(json(&self.kb));
        h.finish_hex()
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("in-memory structures serialize")
}
