//! Dense f32 tensors, a reverse-mode tape, and the AdamW update.

pub mod adamw;
pub mod graph;
pub mod tensor;

pub use adamw::{clip_global_norm, AdamW, AdamWConfig};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::{gelu, layer_norm, nll_next_token, row_softmax, Tensor, LAYER_NORM_EPS};
