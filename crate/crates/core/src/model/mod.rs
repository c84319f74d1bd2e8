//! Decoder-only transformer: weights, forward graph, base training, generation.

pub mod forward;
pub mod generate;
pub mod train;
pub mod weights;

pub use forward::{
    batch_nll, build_forward, build_loss, check_fit, forward_logits, next_token_targets, window_nll,
    ForwardPass, LayerTrace,
};
pub use generate::{argmax, generate, Decoder, GenerationRequest};
pub use train::{lr_at, sample_windows, train_base, BaseTrainConfig, BaseTrainOutcome};
pub use weights::{
    init_model, LanguageModel, LayerView, LayerWeights, LinearKind, ModelConfig, ModelWeights,
    INIT_STD,
};
