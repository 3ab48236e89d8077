use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lethe_core::deindex::{append_ledger_record, CompactOptions, RequestStatus, Selector};
use lethe_core::embeddings::EmbeddingConfig;
use lethe_core::rag::{
    read_chunks, ExtractiveGenerator, ForgetSelector, FusionMode, Generator, RemoteGenerator, RetrievalMode,
};
use lethe_core::ranking::{Bm25Params, RankModel, RankParams};
use lethe_core::text::{read_corpus, PipelineConfig};
use lethe_core::{snapshot, Engine, EngineConfig, Error};
use serde_json::json;

use crate::{Cli, Command, DeindexCommand, EmbedCommand, ExportTarget, Fusion, IndexArgs, Mode, QueryArgs, QueryModel, RagCommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::InvalidArgument(_) => Self::Usage(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

struct Out {
    json: bool,
    w: BufWriter<io::StdoutLock<'static>>,
}

impl Out {
    fn emit(&mut self, text: impl fmt::Display, value: serde_json::Value) -> CliResult {
        if self.json {
            writeln!(self.w, "{value}")?;
        } else {
            writeln!(self.w, "{text}")?;
        }
        Ok(())
    }
}

fn ledger_path(snapshot: &Path) -> PathBuf {
    let mut p = snapshot.as_os_str().to_owned();
    p.push(".ledger.jsonl");
    PathBuf::from(p)
}

fn load(path: &Path) -> CliResult<Engine> {
    snapshot::load(path).map_err(|e| match e {
        Error::Io(io) if io.kind() == io::ErrorKind::NotFound => CliError::Data(format!(
            "no snapshot at {}; run `lethe index <corpus>` first",
            path.display()
        )),
        other => other.into(),
    })
}

fn save(engine: &Engine, path: &Path) -> CliResult<String> {
    Ok(snapshot::save(engine, path)?)
}

pub fn run(cli: &Cli) -> CliResult {
    let mut out = Out {
        json: cli.json,
        w: BufWriter::new(io::stdout().lock()),
    };
    let path = cli.snapshot.as_path();
    match &cli.command {
        Command::Index(args) => index(args, path, &mut out)?,
        Command::Query(args) => query(&load(path)?, args, &mut out)?,
        Command::Deindex(cmd) => deindex(cmd, path, &mut out)?,
        Command::Embed(cmd) => embed(cmd, path, &mut out)?,
        Command::Rag(cmd) => rag(cmd, path, &mut out)?,
        Command::Export { what } => export(&load(path)?, *what, &mut out)?,
        Command::Stats => {
            let s = load(path)?.stats();
            let text = format!(
                "n={}\nvocab={}\navglen={}\nstored={}\ntombstones={}\ndeindexed={}\nkb_chunks={}",
                s.n, s.vocab, s.avglen, s.stored, s.tombstones, s.deindexed, s.kb_chunks
            );
            out.emit(text, json!(s))?;
        }
    }
    out.w.flush()?;
    Ok(())
}

fn index(args: &IndexArgs, path: &Path, out: &mut Out) -> CliResult {
    let pipeline = PipelineConfig {
        lowercase: !args.keep_case,
        stemming: args.stem,
        stop_words: args.stop_words.iter().map(|w| w.to_lowercase()).collect(),
        ..PipelineConfig::default()
    };
    let config = EngineConfig {
        pipeline,
        embedding: EmbeddingConfig {
            window: args.window,
            dim: args.dim,
        },
        bm25: Bm25Params::new(args.k1, args.b)?,
        tdm_scheme: args.scheme.parse()?,
    };
    let file = File::open(&args.corpus)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.corpus.display())))?;
    let docs = read_corpus(BufReader::new(file), &config.pipeline)?;
    let engine = Engine::build(docs, config)?;
    let checksum = save(&engine, path)?;
    let s = engine.stats();
    out.emit(
        format!("indexed {} documents, {} terms -> {}", s.n, s.vocab, path.display()),
        json!({"documents": s.n, "terms": s.vocab, "snapshot": path, "checksum": checksum}),
    )
}

fn query(engine: &Engine, args: &QueryArgs, out: &mut Out) -> CliResult {
    if args.query.trim().is_empty() {
        return Err(CliError::Usage("query must not be empty".into()));
    }
    let model = match args.model {
        QueryModel::Boolean => {
            for doc_id in engine.query_boolean(&args.query)?.into_iter().take(args.top) {
                out.emit(&doc_id, json!({"doc_id": doc_id}))?;
            }
            return Ok(());
        }
        QueryModel::Vsm => RankModel::Vsm,
        QueryModel::Prm => RankModel::Prm,
        QueryModel::Bm25 => RankModel::Bm25,
        QueryModel::Dense => RankModel::Dense,
    };
    if engine.tokenize(&args.query).is_empty() {
        return Err(CliError::Usage("query has no searchable terms".into()));
    }
    let defaults = engine.config().bm25;
    let params = RankParams {
        bm25: Bm25Params::new(args.k1.unwrap_or(defaults.k1), args.b.unwrap_or(defaults.b))?,
        ..RankParams::default()
    };
    for hit in engine.rank_with(&args.query, model, &params, args.top)? {
        out.emit(format!("{}\t{}", hit.doc_id, hit.score), json!(hit))?;
    }
    Ok(())
}

fn deindex(cmd: &DeindexCommand, path: &Path, out: &mut Out) -> CliResult {
    let mut engine = load(path)?;
    let ledger = ledger_path(path);
    match cmd {
        DeindexCommand::Submit { subject, docs, query } => {
            let selector = match query {
                Some(q) => Selector::Query(q.clone()),
                None => Selector::DocIds(docs.clone()),
            };
            let known = engine.ledger().len();
            let request = engine.submit_request(subject, selector)?;
            if engine.ledger().len() > known {
                save(&engine, path)?;
                append_ledger_record(&ledger, &request)?;
            }
            out.emit(&request.request_id, json!(request))?;
        }
        DeindexCommand::Apply { request_id } => {
            let tombstones = engine.apply_deindex(request_id)?;
            save(&engine, path)?;
            append_ledger_record(&ledger, engine.ledger().get(request_id).expect("applied request"))?;
            for t in tombstones {
                out.emit(&t.doc_id, json!(t))?;
            }
        }
        DeindexCommand::Verify { doc_id } => {
            if engine.document(doc_id).is_none() {
                return Err(Error::NotFound { kind: "document", name: doc_id.clone() }.into());
            }
            let report = engine.verify_absence(doc_id);
            for check in &report.checks {
                let state = if check.present { "present" } else { "absent" };
                out.emit(
                    format!("{}\t{state}\t{}", json!(check.model).as_str().unwrap_or_default(), check.hits.join("; ")),
                    json!({"doc_id": doc_id, "model": check.model, "present": check.present, "hits": check.hits}),
                )?;
            }
        }
        DeindexCommand::Compact { purge } => {
            let before = engine.stats().tombstones;
            let applied: Vec<String> = engine
                .ledger()
                .requests()
                .iter()
                .filter(|r| r.status == RequestStatus::Applied)
                .map(|r| r.request_id.clone())
                .collect();
            engine.compact(CompactOptions { purge_raw: *purge });
            save(&engine, path)?;
            for id in &applied {
                append_ledger_record(&ledger, engine.ledger().get(id).expect("known request"))?;
            }
            out.emit(
                format!("cleared {before} tombstones, closed {} requests", applied.len()),
                json!({"tombstones_cleared": before, "requests_compacted": applied, "purged": purge}),
            )?;
        }
        DeindexCommand::Drift { subject, k } => {
            let report = engine.drift_report(subject, *k)?;
            for (side, list) in [("before", &report.neighbors_before), ("after", &report.neighbors_after)] {
                for (term, cos) in list {
                    out.emit(
                        format!("{side}\t{term}\t{cos}"),
                        json!({"kind": format!("neighbor_{side}"), "term": term, "cosine": cos}),
                    )?;
                }
            }
            for (class, pairs) in [("weakened", &report.weakened), ("strengthened", &report.strengthened)] {
                for p in pairs {
                    let show = |c: Option<f64>| c.map_or("-".to_string(), |c| c.to_string());
                    out.emit(
                        format!("{class}\t{}\t{}\t{}\t{}", p.term, show(p.before), show(p.after), p.delta),
                        json!({"kind": class, "term": p.term, "before": p.before, "after": p.after, "delta": p.delta}),
                    )?;
                }
            }
            if report.subject_vanished {
                out.emit(
                    format!("vanished\t{}", report.subject),
                    json!({"kind": "vanished", "term": report.subject}),
                )?;
            }
        }
        DeindexCommand::List => {
            for r in engine.ledger().requests() {
                out.emit(format!("{}\t{}\t{}\t{}", r.request_id, r.status, r.subject, r.selector), json!(r))?;
            }
        }
    }
    Ok(())
}

fn embed(cmd: &EmbedCommand, path: &Path, out: &mut Out) -> CliResult {
    let mut engine = load(path)?;
    match cmd {
        EmbedCommand::Build { window, dim } => {
            let current = engine.config().embedding;
            let config = EmbeddingConfig {
                window: window.unwrap_or(current.window),
                dim: dim.unwrap_or(current.dim),
            };
            if config.window == 0 || config.dim == 0 {
                return Err(CliError::Usage("window and dim must be >= 1".into()));
            }
            engine.rebuild_embeddings(config)?;
            save(&engine, path)?;
            let model = engine.embeddings();
            out.emit(
                format!("embeddings: {} terms, dim {}", model.vocab.len(), model.dim),
                json!({"terms": model.vocab.len(), "dim": model.dim, "window": config.window}),
            )?;
        }
        EmbedCommand::Neighbors { term, k } => {
            for (t, cos) in engine.neighbors(term, *k)? {
                out.emit(format!("{t}\t{cos}"), json!({"term": t, "cosine": cos}))?;
            }
        }
    }
    Ok(())
}

fn rag(cmd: &RagCommand, path: &Path, out: &mut Out) -> CliResult {
    let mut engine = load(path)?;
    match cmd {
        RagCommand::Ingest { chunks } => {
            let file = File::open(chunks).map_err(|e| CliError::Data(format!("{}: {e}", chunks.display())))?;
            let items = read_chunks(BufReader::new(file))?;
            let outcome = engine.ingest_kb(items);
            save(&engine, path)?;
            for c in &outcome.ingested {
                out.emit(
                    format!("{}\t{}", c.chunk_id, c.source_doc_id),
                    json!({"chunk_id": c.chunk_id, "source_doc_id": c.source_doc_id}),
                )?;
            }
            for r in &outcome.rejected {
                eprintln!("rejected record {} ({}): {}", r.ordinal + 1, r.source_doc_id, r.reason);
            }
        }
        RagCommand::Query { query, mode, fusion, top, generator_url } => {
            if query.trim().is_empty() {
                return Err(CliError::Usage("query must not be empty".into()));
            }
            let mode = match mode {
                Mode::Sparse => RetrievalMode::Sparse,
                Mode::Dense => RetrievalMode::Dense,
                Mode::Hybrid => RetrievalMode::Hybrid,
            };
            let fusion = match fusion {
                Fusion::Early => FusionMode::Early,
                Fusion::Late => FusionMode::Late,
            };
            let stub = ExtractiveGenerator::new(engine.config().pipeline.clone());
            let remote = generator_url.as_ref().map(RemoteGenerator::new);
            let generator: &dyn Generator = match &remote {
                Some(r) => r,
                None => &stub,
            };
            let r = engine.rag_answer(query, mode, fusion, *top, generator)?;
            let mut text = format!("answer\t{}", r.answer);
            for hit in &r.retrieved {
                text.push_str(&format!("\nretrieved\t{}\t{}", hit.chunk_id, hit.score));
            }
            for id in &r.provenance {
                text.push_str(&format!("\nprovenance\t{id}"));
            }
            out.emit(text, json!(r))?;
        }
        RagCommand::Forget { chunks, subject } => {
            let selector = match subject {
                Some(s) => ForgetSelector::Subject(s.clone()),
                None => ForgetSelector::ChunkIds(chunks.clone()),
            };
            let outcome = engine.forget_chunks(&selector);
            save(&engine, path)?;
            for id in &outcome.removed {
                out.emit(format!("removed\t{id}"), json!({"chunk_id": id, "removed": true}))?;
            }
            for id in &outcome.unknown {
                out.emit(format!("unknown\t{id}"), json!({"chunk_id": id, "removed": false}))?;
            }
        }
    }
    Ok(())
}

fn export(engine: &Engine, what: ExportTarget, out: &mut Out) -> CliResult {
    match what {
        ExportTarget::Tdm => {
            if out.json {
                let tdm = engine.tdm();
                let terms = tdm.vocab().terms();
                for (i, row) in tdm.to_dense().iter().enumerate() {
                    for (j, w) in row.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                        out.emit("", json!({"term": terms[i], "doc_id": tdm.doc_ids()[j], "weight": w}))?;
                    }
                }
            } else {
                engine.tdm().dump(&mut out.w)?;
            }
        }
        ExportTarget::Postings => {
            for (term, list) in engine.index().iter_live() {
                for p in list {
                    let positions: Vec<String> = p.positions.iter().map(usize::to_string).collect();
                    out.emit(
                        format!("{term}\t{}\t{}", p.doc_id, positions.join(",")),
                        json!({"term": term, "doc_id": p.doc_id, "positions": p.positions}),
                    )?;
                }
            }
        }
        ExportTarget::Embeddings => {
            if out.json {
                let model = engine.embeddings();
                for (t, v) in model.vocab.terms().iter().zip(&model.vectors) {
                    out.emit("", json!({"term": t, "vector": v}))?;
                }
            } else {
                engine.embeddings().export(&mut out.w)?;
            }
        }
    }
    Ok(())
}
