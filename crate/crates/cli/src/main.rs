//! `lethe`: command-line front end for the retrieval engine.
//!
//! Every command loads the snapshot named by `--snapshot`, runs, and writes
//! the snapshot back if it changed. Output is line-oriented; `--json` prints
//! one JSON object per line instead.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "lethe", version, about = "De-indexing-aware retrieval engine")]
pub struct Cli {
    /// Engine snapshot file.
    #[arg(long, global = true, default_value = "lethe.snap")]
    pub snapshot: PathBuf,
    /// Emit one JSON object per output line.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a fresh engine from a JSONL corpus of {"doc_id", "text"} records.
    Index(IndexArgs),
    /// Run a boolean or ranked query.
    Query(QueryArgs),
    /// Submit, apply and audit de-index requests.
    #[command(subcommand)]
    Deindex(DeindexCommand),
    /// Word embeddings.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Retrieval-augmented generation over the knowledge base.
    #[command(subcommand)]
    Rag(RagCommand),
    /// Dump an internal structure.
    Export {
        #[arg(value_enum)]
        what: ExportTarget,
    },
    /// Corpus and index statistics.
    Stats,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    pub corpus: PathBuf,
    /// Apply suffix stripping.
    #[arg(long)]
    pub stem: bool,
    /// Comma-separated stop words.
    #[arg(long, value_delimiter = ',')]
    pub stop_words: Vec<String>,
    /// Keep original letter case.
    #[arg(long)]
    pub keep_case: bool,
    /// Term-document matrix weighting.
    #[arg(long, default_value = "tf")]
    pub scheme: String,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum QueryModel {
    Boolean,
    Vsm,
    Prm,
    Bm25,
    Dense,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    pub query: String,
    #[arg(long, value_enum, default_value = "bm25")]
    pub model: QueryModel,
    /// Overrides the snapshot's BM25 k1.
    #[arg(long)]
    pub k1: Option<f64>,
    /// Overrides the snapshot's BM25 b.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Subcommand, Debug)]
pub enum DeindexCommand {
    /// Record a request; prints its id.
    Submit {
        #[arg(long)]
        subject: String,
        /// Explicit document ids, comma-separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "query", required_unless_present = "query")]
        docs: Vec<String>,
        /// Boolean query selecting the documents.
        #[arg(long)]
        query: Option<String>,
    },
    /// Tombstone the documents a pending request selects.
    Apply { request_id: String },
    /// Probe every retrieval model for a document.
    Verify { doc_id: String },
    /// Physically drop tombstoned documents.
    Compact {
        /// Also delete the raw text of de-indexed documents.
        #[arg(long)]
        purge: bool,
    },
    /// Compare a term's embedding neighbourhood before and after removal.
    Drift {
        subject: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// List recorded requests.
    List,
}

#[derive(Subcommand, Debug)]
pub enum EmbedCommand {
    /// Rebuild the embedding model over the live corpus.
    Build {
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Nearest terms by cosine.
    Neighbors {
        term: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Sparse,
    Dense,
    Hybrid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Fusion {
    Early,
    Late,
}

#[derive(Subcommand, Debug)]
pub enum RagCommand {
    /// Add chunks from a JSONL file of {"source_doc_id", "text"} records.
    Ingest { chunks: PathBuf },
    /// Retrieve and answer.
    Query {
        query: String,
        #[arg(long, value_enum, default_value = "hybrid")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "early")]
        fusion: Fusion,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// POST {context, query} to this URL instead of using the extractive stub.
        #[arg(long)]
        generator_url: Option<String>,
    },
    /// Remove chunks by id or by subject term.
    Forget {
        #[arg(long = "chunk", conflicts_with = "subject", required_unless_present = "subject")]
        chunks: Vec<String>,
        #[arg(long)]
        subject: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ExportTarget {
    Tdm,
    Postings,
    Embeddings,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
