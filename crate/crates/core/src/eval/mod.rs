//! Perplexity, multiple-choice scoring and generation latency.

pub mod latency;
pub mod mc;
pub mod ppl;

pub use latency::{profile_latency, LatencyProfile, WARMUP_REPEATS};
pub use mc::{choice_logprob, continuation_tasks, mc_accuracy, mc_accuracy_with, MCTask, McResult, Scoring};
pub use ppl::{perplexity, EvalReport};
