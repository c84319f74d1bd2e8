use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compress::CompressedModel;
use crate::data::{pack, Corpus, Split};
use crate::error::{Error, Result};
use crate::model::{batch_nll, LanguageModel};
use crate::prompt::SoftPrompt;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_id: String,
    pub split: Split,
    pub model_fingerprint: String,
    /// Compression label, e.g. `obs-quant-3bit`.
    pub compression: String,
    pub prompt_id: Option<String>,
    pub k: usize,
    pub ppl: f64,
    /// Mean NLL per predicted token, nats.
    pub mean_nll: f64,
    pub tokens: usize,
    pub seconds: f64,
}

const EVAL_CHUNK: usize = 8;

/// Perplexity over non-overlapping `seq_len` windows of a split, with the
/// prompt (if any) prepended to each window. Position 0 of a window is context only.
pub fn perplexity(
    model: &CompressedModel,
    prompt: Option<&SoftPrompt>,
    corpus: &Corpus,
    split: Split,
    seq_len: usize,
) -> Result<EvalReport> {
    if seq_len < 2 {
        return Err(Error::Config("evaluation seq_len must be at least 2".into()));
    }
    let windows = pack(corpus.split(split), seq_len);
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "{split:?} split of `{}` has no full window of {seq_len}",
            corpus.name
        )));
    }
    let start = Instant::now();
    let input = prompt.and_then(SoftPrompt::as_input);
    let (total, count) = batch_nll(model, &windows, input, EVAL_CHUNK)?;
    let mean_nll = total / count as f64;
    Ok(EvalReport {
        corpus_id: corpus.id.clone(),
        split,
        model_fingerprint: model.fingerprint(),
        compression: model.spec().label(),
        prompt_id: prompt.map(SoftPrompt::id),
        k: prompt.map_or(0, SoftPrompt::k),
        ppl: mean_nll.exp(),
        mean_nll,
        tokens: count,
        seconds: start.elapsed().as_secs_f64(),
    })
}
