//! Mining vulnerability-fixing commits, building labeled Python snippet
//! datasets, training token embeddings and an LSTM vulnerability classifier,
//! and comparing embedding methods on it.
//!
//! The pipeline stages live in separate modules:
//!
//! * [`miner`] finds candidate fix commits (GitHub REST API or recorded fixtures).
//! * [`labeler`] turns their diffs into vulnerable/fixed code snippets.
//! * [`pytokenizer`] normalizes and lexes Python source.
//! * [`embeddings`] trains and serves token vectors behind [`embeddings::EmbeddingProvider`].
//! * [`classifier`] is a from-scratch LSTM with BPTT and Adam.
//! * [`evaluator`] computes metrics, k-fold runs, sweeps and reports.

pub mod classifier;
pub mod embeddings;
pub mod evaluator;
pub mod jsonl;
pub mod labeler;
pub mod miner;
pub mod pytokenizer;
pub mod seed;

pub use miner::VulnCategory;
