//! Multiple-choice continuation accuracy of a 2-bit model, with and
//! without a learned prompt.

use cplm::compress::{calibrate, compress_model, CompressionSpec};
use cplm::data::{synth_corpus, Split, SynthSpec};
use cplm::eval::{continuation_tasks, mc_accuracy_with, Scoring};
use cplm::model::{init_model, train_base, BaseTrainConfig, ModelConfig};
use cplm::prompt::{train_prompt, PromptTrainConfig};

fn main() -> cplm::Result<()> {
    let corpus = synth_corpus(&SynthSpec::named("alpha", 200_000)?)?;
    let cfg = ModelConfig { vocab_size: 256, embed_dim: 64, n_layers: 2, n_heads: 4, ff_dim: 256, max_positions: 80, seed: 1 };
    let base = train_base(&init_model(&cfg)?, &corpus, &BaseTrainConfig { steps: 400, seq_len: 80, seed: 2, ..Default::default() })?
        .weights;
    let calib = calibrate(&base, &corpus, 16, 64, 0.01)?;
    let model = compress_model(&base, &CompressionSpec::obs_quant(2), Some(&calib))?;
    let mut pc = PromptTrainConfig::new(8, 200, 50, 3);
    pc.seq_len = 64;
    pc.val_windows = Some(32);
    let (prompt, _) = train_prompt(&model, &corpus, &pc)?;

    for choices in [2usize, 4] {
        let tasks = continuation_tasks(corpus.split(Split::Test), 200, choices, 32, 8, 5)?;
        for scoring in [Scoring::PerToken, Scoring::Sum] {
            let none = mc_accuracy_with(&model, None, &tasks, scoring)?;
            let with = mc_accuracy_with(&model, prompt.as_input(), &tasks, scoring)?;
            println!(
                "{choices} choices, {scoring:?} scoring: {:.3} ± {:.3} without prompt, {:.3} ± {:.3} with",
                none.accuracy, none.std_error, with.accuracy, with.std_error
            );
        }
    }
    Ok(())
}
