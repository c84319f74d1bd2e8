use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::pipeline::{
    ablation_prompt_size, full_report, profile, run_pipeline, transfer_matrix, Session,
};
use super::report::{emit_report, ReportTable};
use crate::compress::Method;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "cplm", version, about = "Compress a small language model and recover it with a learned prompt")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `./out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Global seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reuse checkpoints already present in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the full-precision base model.
    TrainBase(Common),
    /// Compress the base model with every configured spec.
    Compress(Common),
    /// Train a prompt against every configured compressed model.
    TrainPrompt(Common),
    /// Evaluate all configured models with and without prompts.
    Eval(Common),
    /// Cross-compression transfer grid.
    Transfer(Common),
    /// Prompt-length sweep.
    AblateK(Common),
    /// Generation latency against prompt length.
    Profile(Common),
    /// Every reproducible experiment in the config, as one report.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::TrainBase(c)
            | Command::Compress(c)
            | Command::TrainPrompt(c)
            | Command::Eval(c)
            | Command::Transfer(c)
            | Command::AblateK(c)
            | Command::Profile(c)
            | Command::Report(c) => c,
        }
    }
}

fn open_session(c: &Common) -> Result<Session> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg = cfg.seeded(seed);
    }
    let out = c.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Session::new(cfg, &out, c.resume)
}

fn emit(table: &ReportTable, s: &Session) -> Result<()> {
    emit_report(table, &s.out)?;
    print!("{}", table.to_markdown());
    Ok(())
}

/// Runs one subcommand. Errors carry the failing stage's name.
pub fn run(cli: Cli) -> Result<()> {
    let mut s = open_session(cli.command.common())?;
    match cli.command {
        Command::TrainBase(_) => {
            let w = s.base()?;
            println!("base model {} saved under {}", &crate::model::LanguageModel::fingerprint(&*w)[..16], s.out.display());
        }
        Command::Compress(_) => {
            for spec in s.cfg.compression.clone() {
                let m = s.compressed(&spec)?;
                println!("{:<24} pruned {:>8}", spec.label(), m.pruned_count());
            }
        }
        Command::TrainPrompt(_) => {
            let k = s.cfg.prompt.k;
            for spec in s.cfg.compression.clone() {
                if spec.method == Method::None {
                    continue;
                }
                s.prompt(&spec, k)?;
                if let Some(best) = s.history(&spec, k).and_then(|h| h.best_point()) {
                    println!("{:<24} best val ppl {:.4} at step {}", spec.label(), best.val_ppl, best.step);
                }
            }
        }
        Command::Eval(_) => emit(&run_pipeline(&mut s)?, &s)?,
        Command::Transfer(_) => emit(&transfer_matrix(&mut s)?, &s)?,
        Command::AblateK(_) => emit(&ablation_prompt_size(&mut s)?, &s)?,
        Command::Profile(_) => emit(&profile(&mut s)?, &s)?,
        Command::Report(_) => emit(&full_report(&mut s)?, &s)?,
    }
    Ok(())
}
