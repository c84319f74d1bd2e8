//! Learns a soft prompt against a frozen 2-bit model and compares it with
//! no prompt and with the hand-written hard prompt.

use cplm::compress::{calibrate, compress_model, CompressionSpec};
use cplm::data::{synth_corpus, Split, SynthSpec, TokenizerSpec};
use cplm::eval::perplexity;
use cplm::model::{init_model, train_base, BaseTrainConfig, LanguageModel, ModelConfig};
use cplm::prompt::{hard_prompt, train_prompt, PromptTrainConfig};

fn main() -> cplm::Result<()> {
    let corpus = synth_corpus(&SynthSpec::named("alpha", 200_000)?)?;
    let cfg = ModelConfig { vocab_size: 256, embed_dim: 64, n_layers: 2, n_heads: 4, ff_dim: 256, max_positions: 256, seed: 1 };
    let base = train_base(&init_model(&cfg)?, &corpus, &BaseTrainConfig { steps: 400, seq_len: 256, seed: 2, ..Default::default() })?
        .weights;
    let calib = calibrate(&base, &corpus, 16, 64, 0.01)?;
    let model = compress_model(&base, &CompressionSpec::obs_quant(2), Some(&calib))?;
    let before = model.fingerprint();

    let mut pc = PromptTrainConfig::new(8, 300, 50, 3);
    pc.seq_len = 64;
    pc.val_windows = Some(32);
    let (prompt, history) = train_prompt(&model, &corpus, &pc)?;
    for p in &history.points {
        println!("step {:>4}  validation PPL {:.4}", p.step, p.val_ppl);
    }
    assert_eq!(model.fingerprint(), before, "prompt training must not touch the model");

    let hard = hard_prompt(cplm::prompt::HARD_PROMPT_TEXT, &TokenizerSpec::Byte, model.token_embedding())?;
    let none = perplexity(&model, None, &corpus, Split::Test, 64)?;
    let learned = perplexity(&model, Some(&prompt), &corpus, Split::Test, 64)?;
    let written = perplexity(&model, Some(&hard), &corpus, Split::Test, 64)?;
    println!("test PPL: none {:.4}, hard prompt (k={}) {:.4}, learned (k={}) {:.4}", none.ppl, hard.k(), written.ppl, prompt.k(), learned.ppl);
    Ok(())
}
