//! Shallow cross-encoder reranking under a per-query latency budget.
//!
//! The pipeline: BM25 first stage ([`bm25`]), WordPiece pair encoding
//! ([`tokenizer`]), a small BERT-style cross-encoder ([`model`]) trained
//! with sampled negatives and the generalized BCE loss ([`train`]), a budget
//! controller that turns a latency window into a rerank depth ([`budget`]),
//! and the metrics / sweeps used to measure the tradeoff ([`eval`]).

pub mod bm25;
pub mod budget;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod text;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
