use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenizer::TokenizerSpec;
use crate::error::{Error, Result};
use crate::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A tokenized corpus with positional train/validation/test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub id: String,
    /// Human-readable name (e.g. "alpha"); `id` is the content digest.
    pub name: String,
    pub tokens: Vec<TokenId>,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
    pub tokenizer_id: String,
    pub vocab_size: usize,
}

/// Default positional split fractions (train, validation); test takes the rest.
pub const DEFAULT_SPLIT: (f64, f64) = (0.90, 0.05);

impl Corpus {
    pub fn from_tokens(
        name: &str,
        tokens: Vec<TokenId>,
        tokenizer: &TokenizerSpec,
    ) -> Result<Corpus> {
        Corpus::with_split(name, tokens, tokenizer, DEFAULT_SPLIT)
    }

    pub fn with_split(
        name: &str,
        tokens: Vec<TokenId>,
        tokenizer: &TokenizerSpec,
        (train_frac, val_frac): (f64, f64),
    ) -> Result<Corpus> {
        if tokens.is_empty() {
            return Err(Error::Data(format!("corpus `{name}` is empty")));
        }
        if !(0.0..=1.0).contains(&train_frac) || val_frac < 0.0 || train_frac + val_frac > 1.0 {
            return Err(Error::Config("split fractions must lie in [0, 1] and sum to ≤ 1".into()));
        }
        let vocab_size = tokenizer.vocab_size();
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::Data(format!("token {bad} outside vocabulary of {vocab_size}")));
        }
        let n = tokens.len();
        let train_end = (n as f64 * train_frac).floor() as usize;
        let val_end = ((n as f64 * (train_frac + val_frac)).floor() as usize).max(train_end);
        let tokenizer_id = tokenizer.id();
        let mut h = Sha256::new();
        h.update(tokenizer_id.as_bytes());
        for t in &tokens {
            h.update(t.to_le_bytes());
        }
        let id = format!("{name}-{}", &hex::encode(h.finalize())[..16]);
        Ok(Corpus {
            id,
            name: name.to_string(),
            tokens,
            train: 0..train_end,
            validation: train_end..val_end,
            test: val_end..n,
            tokenizer_id,
            vocab_size,
        })
    }

    /// Reads raw bytes from `path` and tokenizes them.
    pub fn from_file(path: &Path, tokenizer: &TokenizerSpec) -> Result<Corpus> {
        let bytes = std::fs::read(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file");
        Corpus::from_tokens(name, tokenizer.tokenize(&bytes), tokenizer)
    }

    pub fn split(&self, split: Split) -> &[TokenId] {
        let r = match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        };
        &self.tokens[r.clone()]
    }
}

/// Consecutive non-overlapping windows of `seq_len`; the short tail is dropped.
pub fn pack(tokens: &[TokenId], seq_len: usize) -> Vec<&[TokenId]> {
    assert!(seq_len >= 2, "seq_len must be at least 2");
    tokens.chunks_exact(seq_len).collect()
}
