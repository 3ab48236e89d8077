//! Right-to-be-forgotten operations.
//!
//! A [`DeindexRequest`] names a subject and a selector (explicit document ids
//! or a boolean query). Applying it tombstones the resolved documents in the
//! inverted index, rebuilds every derived structure over the live corpus and
//! forgets knowledge-base chunks sourced from those documents. Compaction
//! later rewrites the index physically. Raw documents are kept unless a
//! purging compaction is requested.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::short_id;
use crate::embeddings::EmbeddingModel;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::query::{eval_boolean, parse_query_with, QueryAst};
use crate::rag::{ForgetSelector, RetrievalMode};
use crate::ranking::{RankModel, RankParams};

/// Cosine deltas within this band count as unchanged.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    DocIds(Vec<String>),
    /// Boolean query source text, re-parsed with the engine pipeline.
    Query(String),
}

impl Selector {
    fn canonical(&self, engine: &Engine) -> Result<String> {
        match self {
            Self::DocIds(ids) => {
                let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
                Ok(format!("docs:{}", set.into_iter().collect::<Vec<_>>().join(",")))
            }
            Self::Query(q) => Ok(format!("query:{}", self.ast(engine, q)?)),
        }
    }

    fn ast(&self, engine: &Engine, q: &str) -> Result<QueryAst> {
        parse_query_with(q, &engine.config.pipeline)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DocIds(ids) => write!(f, "docs[{}]", ids.join(",")),
            Self::Query(q) => write!(f, "query[{q}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestStatus {
    Pending,
    Applied,
    Compacted,
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pending => "PENDING",
            Self::Applied => "APPLIED",
            Self::Compacted => "COMPACTED",
        })
    }
}

/// One ledger record. Also the line format of the append-only ledger log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeindexRequest {
    pub request_id: String,
    pub subject: String,
    pub selector: Selector,
    /// Fixed when the request is applied; `None` while pending.
    pub resolved_docs: Option<Vec<String>>,
    pub status: RequestStatus,
    pub submitted_at: DateTime<Utc>,
    pub applied_at: Option<DateTime<Utc>>,
    pub compacted_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub doc_id: String,
    pub request_id: String,
    pub applied_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    requests: Vec<DeindexRequest>,
}

impl Ledger {
    pub fn requests(&self) -> &[DeindexRequest] {
        &self.requests
    }

    pub fn get(&self, request_id: &str) -> Option<&DeindexRequest> {
        self.requests.iter().find(|r| r.request_id == request_id)
    }

    fn get_mut(&mut self, request_id: &str) -> Option<&mut DeindexRequest> {
        self.requests.iter_mut().find(|r| r.request_id == request_id)
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// One JSON object per request.
    pub fn to_jsonl(&self) -> String {
        self.requests
            .iter()
            .map(|r| serde_json::to_string(r).expect("ledger records serialize") + "\n")
            .collect()
    }
}

/// Append `request` as one JSON line to the ledger log at `path`.
pub fn append_ledger_record(path: &Path, request: &DeindexRequest) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{}", serde_json::to_string(request)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeModel {
    Boolean,
    Vsm,
    Prm,
    Bm25,
    Dense,
    Rag,
}

impl ProbeModel {
    pub const ALL: [ProbeModel; 6] = [
        Self::Boolean,
        Self::Vsm,
        Self::Prm,
        Self::Bm25,
        Self::Dense,
        Self::Rag,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    pub model: ProbeModel,
    pub present: bool,
    /// Probes that surfaced the document.
    pub hits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsenceReport {
    pub doc_id: String,
    pub probes: Vec<String>,
    pub checks: Vec<ModelCheck>,
}

impl AbsenceReport {
    pub fn absent(&self) -> bool {
        self.checks.iter().all(|c| !c.present)
    }

    pub fn check(&self, model: ProbeModel) -> Option<&ModelCheck> {
        self.checks.iter().find(|c| c.model == model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftClass {
    Weakened,
    Strengthened,
    Unchanged,
}

/// Classify a cosine change `after - before`.
pub fn classify_drift(delta: f64) -> DriftClass {
    if delta < -DRIFT_TOLERANCE {
        DriftClass::Weakened
    } else if delta > DRIFT_TOLERANCE {
        DriftClass::Strengthened
    } else {
        DriftClass::Unchanged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDrift {
    pub term: String,
    /// `None` when the term is not in that model's vocabulary.
    pub before: Option<f64>,
    pub after: Option<f64>,
    /// `after - before`, absent cosines counted as 0.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub subject: String,
    pub removed_docs: Vec<String>,
    pub k: usize,
    pub neighbors_before: Vec<(String, f64)>,
    pub neighbors_after: Vec<(String, f64)>,
    /// The subject no longer occurs in the live corpus.
    pub subject_vanished: bool,
    pub weakened: Vec<PairDrift>,
    pub strengthened: Vec<PairDrift>,
}

/// Compare `subject`'s neighbourhood in two models.
///
/// Pairs are the union of both top-`k` lists; each is classified by the
/// sign of its cosine change.
pub fn compare_models(
    subject: &str,
    before: &EmbeddingModel,
    after: &EmbeddingModel,
    k: usize,
) -> Result<DriftReport> {
    let neighbors_before = before.nearest_neighbors(subject, k)?;
    let subject_vanished = after.vector(subject).is_none();
    let neighbors_after = if subject_vanished {
        Vec::new()
    } else {
        after.nearest_neighbors(subject, k)?
    };
    let terms: BTreeSet<&str> = neighbors_before
        .iter()
        .chain(&neighbors_after)
        .map(|(t, _)| t.as_str())
        .collect();
    let mut weakened = Vec::new();
    let mut strengthened = Vec::new();
    for term in terms {
        let b = before.similarity(subject, term);
        let a = after.similarity(subject, term);
        let delta = a.unwrap_or(0.0) - b.unwrap_or(0.0);
        let pair = PairDrift {
            term: term.to_string(),
            before: b,
            after: a,
            delta,
        };
        match classify_drift(delta) {
            DriftClass::Weakened => weakened.push(pair),
            DriftClass::Strengthened => strengthened.push(pair),
            DriftClass::Unchanged => {}
        }
    }
    Ok(DriftReport {
        subject: subject.to_string(),
        removed_docs: Vec::new(),
        k,
        neighbors_before,
        neighbors_after,
        subject_vanished,
        weakened,
        strengthened,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompactOptions {
    /// Also delete the raw text of de-indexed documents.
    pub purge_raw: bool,
}

impl Engine {
    /// Record a de-index request. Identical `(subject, selector)` pairs map to
    /// the same request.
    pub fn submit_request(&mut self, subject: &str, selector: Selector) -> Result<DeindexRequest> {
        let subject = self.normalize_term(subject)?;
        let canonical = selector.canonical(self)?;
        let request_id = format!("req-{}", short_id([subject.as_str(), canonical.as_str()], 16));
        if let Some(existing) = self.ledger.get(&request_id) {
            return Ok(existing.clone());
        }
        let request = DeindexRequest {
            request_id,
            subject,
            selector,
            resolved_docs: None,
            status: RequestStatus::Pending,
            submitted_at: Utc::now(),
            applied_at: None,
            compacted_at: None,
        };
        self.ledger.requests.push(request.clone());
        Ok(request)
    }

    /// Resolve the request's selector against the live corpus and remove the
    /// resulting documents from every retrieval path. Returns the tombstones
    /// created by this call.
    pub fn apply_deindex(&mut self, request_id: &str) -> Result<Vec<Tombstone>> {
        let request = self
            .ledger
            .get(request_id)
            .ok_or_else(|| Error::not_found("request", request_id))?
            .clone();
        if request.status != RequestStatus::Pending {
            return Err(Error::RequestState {
                id: request_id.to_string(),
                status: request.status.to_string(),
            });
        }
        let resolved: BTreeSet<String> = match &request.selector {
            Selector::DocIds(ids) => ids
                .iter()
                .filter(|id| self.index.contains_doc(id))
                .cloned()
                .collect(),
            Selector::Query(q) => eval_boolean(&request.selector.ast(self, q)?, &self.index),
        };

        let now = Utc::now();
        let mut created = Vec::new();
        for doc_id in &resolved {
            if self.deindexed.contains(doc_id) {
                continue;
            }
            self.index.tombstone(doc_id)?;
            self.deindexed.insert(doc_id.clone());
            let t = Tombstone {
                doc_id: doc_id.clone(),
                request_id: request_id.to_string(),
                applied_at: now,
            };
            self.tombstones.insert(doc_id.clone(), t.clone());
            created.push(t);
        }
        if !created.is_empty() {
            self.rebuild_derived()?;
        }
        self.kb.forget_sources(&resolved);

        let entry = self.ledger.get_mut(request_id).expect("request exists");
        entry.resolved_docs = Some(resolved.into_iter().collect());
        entry.status = RequestStatus::Applied;
        entry.applied_at = Some(now);
        Ok(created)
    }

    /// Probe every retrieval model with queries built from the document's own
    /// terms and report whether any of them surfaces it.
    pub fn verify_absence(&self, doc_id: &str) -> AbsenceReport {
        let terms: Vec<String> = self
            .document(doc_id)
            .map(|d| d.tokens.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect())
            .unwrap_or_default();
        let mut probes: Vec<Vec<String>> = terms.iter().map(|t| vec![t.clone()]).collect();
        if terms.len() > 1 {
            probes.push(terms.clone());
        }
        let labels: Vec<String> = probes.iter().map(|p| p.join(" AND ")).collect();
        let params = RankParams {
            bm25: self.config.bm25,
            ..RankParams::default()
        };

        let checks = ProbeModel::ALL
            .iter()
            .map(|&model| {
                let hits: Vec<String> = probes
                    .iter()
                    .zip(&labels)
                    .filter(|(probe, _)| self.probe_returns(model, probe, doc_id, &params))
                    .map(|(_, label)| label.clone())
                    .collect();
                ModelCheck {
                    model,
                    present: !hits.is_empty(),
                    hits,
                }
            })
            .collect();
        AbsenceReport {
            doc_id: doc_id.to_string(),
            probes: labels,
            checks,
        }
    }

    fn probe_returns(&self, model: ProbeModel, probe: &[String], doc_id: &str, params: &RankParams) -> bool {
        let ranked = |m: RankModel| {
            self.rank_terms(probe, m, params, usize::MAX)
                .map(|hits| hits.iter().any(|h| h.doc_id == doc_id))
                .unwrap_or(false)
        };
        match model {
            ProbeModel::Boolean => {
                let ast = probe
                    .iter()
                    .cloned()
                    .map(QueryAst::Term)
                    .reduce(QueryAst::and)
                    .expect("probes are non-empty");
                eval_boolean(&ast, &self.index).contains(doc_id)
            }
            ProbeModel::Vsm => ranked(RankModel::Vsm),
            ProbeModel::Prm => ranked(RankModel::Prm),
            ProbeModel::Bm25 => ranked(RankModel::Bm25),
            ProbeModel::Dense => ranked(RankModel::Dense),
            ProbeModel::Rag => {
                let query = probe.join(" ");
                [RetrievalMode::Sparse, RetrievalMode::Dense, RetrievalMode::Hybrid]
                    .into_iter()
                    .any(|mode| {
                        self.kb
                            .retrieve(&query, mode, usize::MAX)
                            .iter()
                            .any(|r| self.kb.source_of(&r.chunk_id) == Some(doc_id))
                    })
            }
        }
    }

    /// Physically drop tombstoned documents from the index and close out
    /// applied requests. The ledger itself is kept.
    pub fn compact(&mut self, options: CompactOptions) {
        self.index.compact();
        self.tombstones.clear();
        let now = Utc::now();
        for r in &mut self.ledger.requests {
            if r.status == RequestStatus::Applied {
                r.status = RequestStatus::Compacted;
                r.compacted_at = Some(now);
            }
        }
        if options.purge_raw {
            let dead = &self.deindexed;
            self.documents.retain(|d| !dead.contains(&d.doc_id));
        }
    }

    /// Compare `subject`'s embedding neighbourhood over all stored documents
    /// (before removal) with the current live model (after removal).
    pub fn drift_report(&self, subject: &str, k: usize) -> Result<DriftReport> {
        let subject = self.normalize_term(subject)?;
        let before = EmbeddingModel::build(&self.documents, &self.config.embedding)?;
        let mut report = compare_models(&subject, &before, &self.embeddings, k)?;
        report.removed_docs = self
            .documents
            .iter()
            .filter(|d| self.deindexed.contains(&d.doc_id))
            .map(|d| d.doc_id.clone())
            .collect();
        Ok(report)
    }

    /// Forget knowledge-base chunks directly, outside of a de-index request.
    pub fn forget_chunks(&mut self, selector: &ForgetSelector) -> crate::rag::ForgetOutcome {
        self.kb.forget(selector)
    }

    /// Ledger records grouped by status, for reporting.
    pub fn ledger_summary(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in self.ledger.requests() {
            *out.entry(r.status.to_string()).or_default() += 1;
        }
        out
    }
}
