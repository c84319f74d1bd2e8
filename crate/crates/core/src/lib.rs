//! Post-training compression of a small decoder-only transformer, and
//! recovery of its generation quality with a learned soft prompt trained
//! against the frozen compressed weights.
//!
//! - [`kernel`]: f32 tensors, reverse-mode tape, AdamW
//! - [`model`]: the transformer, base training, greedy generation
//! - [`compress`]: magnitude / second-order pruning, RTN / second-order quantization, packing
//! - [`prompt`]: soft prompts, hard prompts, prompt training, stitching
//! - [`eval`]: perplexity, zero-shot multiple choice, latency profiling
//! - [`data`]: tokenizers, corpora, synthetic generators
//! - [`harness`]: configs, checkpoints, experiment pipelines, reports, CLI

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compress;
pub mod data;
pub mod digest;
pub mod error;
pub mod eval;
pub mod harness;
pub mod kernel;
pub mod model;
pub mod prompt;

pub use error::{Corruption, Error, Result};

/// Token ids are indices into the embedding table.
pub type TokenId = u32;
