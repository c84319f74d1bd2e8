//! Configuration, checkpoints, experiment pipelines, reports and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod container;
pub mod pipeline;
pub mod report;

pub use checkpoint::{load_checkpoint, load_compressed, load_model, load_prompt, save_checkpoint, Artifact};
pub use config::{
    mix_seed, CorpusSource, ExperimentConfig, LatencyConfig, SweepConfig, TransferConfig,
    ZeroShotConfig,
};
pub use pipeline::{
    ablation_prompt_size, full_report, learned_source, profile, run_pipeline, spec_key,
    transfer_matrix, zero_shot, Session,
};
pub use report::{emit_report, sig6, ReportRow, ReportTable, CSV_HEADER};
