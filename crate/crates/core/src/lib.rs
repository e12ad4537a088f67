//! Hybrid next-token code completion.
//!
//! Two small transformer backbones look at the same code prefix: a
//! bidirectional context encoder pools the prefix into a context feature,
//! and a causal generator carries the autoregressive hidden state. A
//! learnable fusion weight (static scalar or a context-dependent gate)
//! combines the two features, and a shared prediction head turns the fused
//! vector into a next-token distribution.
//!
//! The crate also ships everything needed to train and judge that model at
//! desk scale: a code lexer and JSONL corpus layer, a staged training
//! pipeline with binary checkpoints, an evaluation suite (accuracy,
//! precision/recall/F1, BLEU with brevity penalty, latency, throughput),
//! a perturbation robustness harness, and a CLI that wires the pipeline
//! end to end.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod fusion;
pub mod generator;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod remote;
pub mod robustness;
pub mod tensor;
pub mod training;

pub use tensor::{Parameter, Tensor, TensorError};
