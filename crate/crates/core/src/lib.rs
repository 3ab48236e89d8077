//! De-indexing-aware retrieval engine.
//!
//! Boolean, vector-space, probabilistic and BM25 ranking over a positional
//! inverted index, count-based embeddings, a retrieval-augmented generation
//! skeleton, and right-to-be-forgotten operations (de-index requests,
//! absence verification, compaction, embedding drift reports).

pub mod deindex;
pub mod digest;
pub mod embeddings;
pub mod engine;
pub mod error;
pub mod index;
pub mod matrix;
pub mod query;
pub mod rag;
pub mod ranking;
pub mod snapshot;
pub mod text;

pub use engine::{Engine, EngineConfig, Stats};
pub use error::{Error, Result};
