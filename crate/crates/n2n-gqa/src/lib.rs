//! Zero-shot multi-hop question answering over hybrid table-text corpora.
//!
//! The pipeline plans a question into retrieval hops, curates a weighted
//! evidence graph per hop (semantic score times a centrality boost),
//! bridges the best table row to the best passage, and synthesizes the
//! final answer from the pruned graph. All language-model calls go through
//! one gateway with a scripted mock backend, so every stage runs
//! deterministically offline.

pub mod bridge;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod graph;
pub mod pipeline;
pub mod planner;
pub mod retriever;
pub mod synthetic;

pub use corpus::{load_corpus, Corpus, DocKind, Document, TableMeta};
pub use gateway::{Backend, HttpBackend, HttpBackendConfig, RetryPolicy, ScriptedMock};
pub use pipeline::{answer_question, AnswerRecord, Mode, PipelineConfig};
pub use retriever::{LexicalRetriever, RemoteRetriever, Retriever, ScoredDocument};
