//! Retrieval-augmented question answering over quarterly financial fundamentals.
//!
//! The crate is organised along the query path:
//!
//! * [`ingest`] parses and cleans fundamentals datasets into [`FinRecord`]s.
//! * [`docbuild`] groups records into one [`Passage`] per `(ticker, quarter)`.
//! * [`embed`] maps text to fixed-dimension vectors (remote or feature-hashed).
//! * [`vecstore`] is an exact flat inner-product index with a binary file format.
//! * [`llm`] talks to OpenAI-compatible chat endpoints and hosts the token estimator.
//! * [`rag`] wires retrieval, context budgeting and prompting into [`QueryResult`]s.
//! * [`eval`] synthesizes QA sets and compares baseline and RAG groups.

pub mod config;
pub mod docbuild;
pub mod embed;
pub mod eval;
pub mod ingest;
pub mod llm;
pub mod rag;
pub mod synthetic;
mod transport;
pub mod vecstore;

pub use config::AppConfig;
pub use docbuild::{build_passages, render_passage, Passage};
pub use embed::{
    hash_embed, l2_normalize, EmbedError, Embedder, EmbedderKind, EmbedderProfile, EmbeddingVector,
    HashEmbedder, RemoteEmbedder,
};
pub use eval::{
    compute_metrics, judge_answer, run_groups, synthesize_qa, EvalReport, GroupConfig,
    GroupMetrics, QAItem,
};
pub use ingest::{
    clean_dataset, load_dataset, normalize_date, parse_amount, parse_record, DatasetFormat,
    FinRecord, IngestError, NormalizationReport,
};
pub use llm::{
    estimate_tokens, scripted_complete, ChatExchange, ChatMessage, Completer, LlmError,
    ModelProfile, OpenAiCompleter, Role, ScriptedCompleter,
};
pub use rag::{assemble_context, build_prompt, Corpus, Mode, QueryResult, RagError, RagPipeline};
pub use transport::RetryPolicy;
pub use vecstore::{SearchHit, VectorIndex, VectorStoreError};

/// Default number of passages retrieved per query.
pub const DEFAULT_TOP_K: usize = 5;
/// Default token budget for the assembled context.
pub const DEFAULT_CONTEXT_BUDGET: usize = 1024;
/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 384;
/// Token cap applied to each rendered passage.
pub const MAX_SEQUENCE_TOKENS: usize = 512;
