use super::soft::SoftPrompt;
use crate::compress::CompressedModel;
use crate::error::{Error, Result};
use crate::kernel::Tensor;
use crate::model::LanguageModel;

/// A prompt paired with the model it will be evaluated on.
#[derive(Clone, Copy, Debug)]
pub struct PromptedModel<'a> {
    pub model: &'a CompressedModel,
    pub prompt: &'a SoftPrompt,
    /// True when the prompt was trained against a different model.
    pub transferred: bool,
}

impl PromptedModel<'_> {
    pub fn prompt_input(&self) -> Option<&Tensor> {
        self.prompt.as_input()
    }
}

/// Attaches `prompt` to `target`. A prompt trained on another model is
/// allowed (that is the transfer case) and is noted in the log.
pub fn stitch<'a>(prompt: &'a SoftPrompt, target: &'a CompressedModel) -> Result<PromptedModel<'a>> {
    let d = target.config().embed_dim;
    if prompt.k() > 0 && prompt.dim() != d {
        return Err(Error::Compatibility(format!(
            "prompt width {} but target embed_dim {d}",
            prompt.dim()
        )));
    }
    let target_fp = target.fingerprint();
    let transferred = match &prompt.provenance().source_fingerprint {
        Some(src) if *src != target_fp => {
            log::info!(
                "stitching prompt from model {} onto model {}",
                &src[..src.len().min(12)],
                &target_fp[..12]
            );
            true
        }
        _ => false,
    };
    Ok(PromptedModel { model: target, prompt, transferred })
}
