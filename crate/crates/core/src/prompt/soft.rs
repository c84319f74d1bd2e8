use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compress::CompressionSpec;
use crate::data::TokenizerSpec;
use crate::digest::tensor_digest;
use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// Instruction used as the hand-written prompt baseline.
pub const HARD_PROMPT_TEXT: &str = "Please carefully examine the weight matrix within the model, \
as it may contain errors. It is crucial to verify its accuracy and make any necessary \
adjustments to ensure optimal performance";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Learned,
    Hard,
    Random,
}

/// Where a prompt came from. Filled in once when the prompt is created or
/// training finishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub kind: PromptKind,
    /// Fingerprint of the model the prompt was trained against.
    pub source_fingerprint: Option<String>,
    pub source_spec: Option<CompressionSpec>,
    pub corpus_id: Option<String>,
    /// Digest of the training configuration.
    pub config_digest: Option<String>,
}

impl Provenance {
    pub fn new(kind: PromptKind) -> Provenance {
        Provenance {
            kind,
            source_fingerprint: None,
            source_spec: None,
            corpus_id: None,
            config_digest: None,
        }
    }
}

/// `k` d-dimensional vectors prepended to every input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftPrompt {
    embeddings: Tensor,
    provenance: Provenance,
}

impl SoftPrompt {
    pub fn new(embeddings: Tensor, provenance: Provenance) -> Result<SoftPrompt> {
        if embeddings.shape().len() != 2 {
            return Err(Error::Shape(format!("prompt must be [k × d], got {:?}", embeddings.shape())));
        }
        if !embeddings.is_finite() {
            return Err(Error::Data("prompt embeddings must be finite".into()));
        }
        Ok(SoftPrompt { embeddings, provenance })
    }

    /// An empty prompt of width `d`.
    pub fn empty(d: usize) -> SoftPrompt {
        SoftPrompt {
            embeddings: Tensor::zeros(&[0, d]),
            provenance: Provenance::new(PromptKind::Random),
        }
    }

    pub fn k(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.embeddings.shape()[1]
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The tensor to hand to the forward pass; `None` for an empty prompt.
    pub fn as_input(&self) -> Option<&Tensor> {
        (self.k() > 0).then_some(&self.embeddings)
    }

    /// Content digest of the embeddings.
    pub fn id(&self) -> String {
        tensor_digest([("prompt.E", &self.embeddings)])
    }

    pub fn is_trainable(&self) -> bool {
        self.provenance.kind != PromptKind::Hard
    }
}

/// `k` rows copied from uniformly chosen rows of the token embedding (with
/// replacement), deterministic in `seed`.
pub fn init_prompt(k: usize, token_embedding: &Tensor, seed: u64) -> SoftPrompt {
    let (v, d) = (token_embedding.rows(), token_embedding.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(k * d);
    for _ in 0..k {
        data.extend_from_slice(token_embedding.row(rng.random_range(0..v)));
    }
    SoftPrompt {
        embeddings: Tensor::new(vec![k, d], data).expect("sized"),
        provenance: Provenance::new(PromptKind::Learned),
    }
}

/// Embedding rows of the tokenized `text`, in order. Not trainable.
pub fn hard_prompt(text: &str, tokenizer: &TokenizerSpec, token_embedding: &Tensor) -> Result<SoftPrompt> {
    let ids = tokenizer.tokenize(text.as_bytes());
    if ids.is_empty() {
        return Err(Error::Data("hard prompt text produced no tokens".into()));
    }
    let mut data = Vec::with_capacity(ids.len() * token_embedding.cols());
    for &id in &ids {
        if id as usize >= token_embedding.rows() {
            return Err(Error::Compatibility(format!(
                "token {id} outside the model's {}-entry vocabulary",
                token_embedding.rows()
            )));
        }
        data.extend_from_slice(token_embedding.row(id as usize));
    }
    SoftPrompt::new(
        Tensor::new(vec![ids.len(), token_embedding.cols()], data)?,
        Provenance::new(PromptKind::Hard),
    )
}

/// Random-token prompt of the same form as [`init_prompt`], marked as untrained.
pub fn random_prompt(k: usize, token_embedding: &Tensor, seed: u64) -> SoftPrompt {
    let mut p = init_prompt(k, token_embedding, seed);
    p.provenance.kind = PromptKind::Random;
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Tensor {
        Tensor::new(vec![4, 2], (0..8).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn init_rows_come_from_table() {
        let w = table();
        let p = init_prompt(6, &w, 3);
        assert_eq!(p.k(), 6);
        for r in 0..6 {
            assert!((0..4).any(|i| w.row(i) == p.embeddings().row(r)));
        }
        assert_eq!(p, init_prompt(6, &w, 3));
        assert_eq!(init_prompt(0, &w, 3).k(), 0);
    }

    #[test]
    fn hard_prompt_rows_follow_tokens() {
        let w = Tensor::new(vec![256, 1], (0..256).map(|i| i as f32).collect()).unwrap();
        let p = hard_prompt("ab", &TokenizerSpec::Byte, &w).unwrap();
        assert_eq!(p.embeddings().data(), &[97.0, 98.0]);
        assert!(!p.is_trainable());
        let full = hard_prompt(HARD_PROMPT_TEXT, &TokenizerSpec::Byte, &w).unwrap();
        assert_eq!(full.k(), HARD_PROMPT_TEXT.len());
        assert!(matches!(hard_prompt("", &TokenizerSpec::Byte, &w), Err(Error::Data(_))));
    }
}
