//! Soft prompts: learned embedding rows prepended to the input of a frozen
//! compressed model, plus hard-text and random baselines.

pub mod soft;
pub mod stitch;
pub mod train;

pub use soft::{
    hard_prompt, init_prompt, random_prompt, PromptKind, Provenance, SoftPrompt, HARD_PROMPT_TEXT,
};
pub use stitch::{stitch, PromptedModel};
pub use train::{
    prompt_nll, shard_ppl, train_prompt, validation_shard, EvalPoint, PromptTrainConfig,
    TrainHistory,
};
