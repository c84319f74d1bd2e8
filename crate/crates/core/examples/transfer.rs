//! Trains one prompt per compressed model and stitches every prompt onto
//! every model, on the training corpus and on an unseen one.

use cplm::compress::{calibrate, compress_model, CompressionSpec};
use cplm::data::{synth_corpus, Split, SynthSpec};
use cplm::eval::perplexity;
use cplm::model::{init_model, train_base, BaseTrainConfig, ModelConfig};
use cplm::prompt::{stitch, train_prompt, PromptTrainConfig};

fn main() -> cplm::Result<()> {
    let alpha = synth_corpus(&SynthSpec::named("alpha", 200_000)?)?;
    let beta = synth_corpus(&SynthSpec::named("beta", 100_000)?)?;
    let cfg = ModelConfig { vocab_size: 256, embed_dim: 64, n_layers: 2, n_heads: 4, ff_dim: 256, max_positions: 80, seed: 1 };
    let base = train_base(&init_model(&cfg)?, &alpha, &BaseTrainConfig { steps: 400, seq_len: 80, seed: 2, ..Default::default() })?
        .weights;
    let calib = calibrate(&base, &alpha, 16, 64, 0.01)?;
    let specs = [CompressionSpec::obs_prune(0.5), CompressionSpec::obs_prune(0.625), CompressionSpec::obs_prune(0.75)];
    let models = specs
        .iter()
        .map(|s| compress_model(&base, s, Some(&calib)))
        .collect::<cplm::Result<Vec<_>>>()?;

    let mut pc = PromptTrainConfig::new(8, 200, 50, 3);
    pc.seq_len = 64;
    pc.val_windows = Some(32);
    let prompts = models
        .iter()
        .map(|m| train_prompt(m, &alpha, &pc).map(|(p, _)| p))
        .collect::<cplm::Result<Vec<_>>>()?;

    for corpus in [&alpha, &beta] {
        println!("\n{} test PPL (rows: target model, columns: prompt source)", corpus.name);
        print!("{:<18}{:>10}", "", "none");
        for s in &specs {
            print!("{:>18}", s.label());
        }
        println!();
        for (target, model) in specs.iter().zip(&models) {
            print!("{:<18}{:>10.4}", target.label(), perplexity(model, None, corpus, Split::Test, 64)?.ppl);
            for p in &prompts {
                let stitched = stitch(p, model)?;
                print!("{:>18.4}", perplexity(stitched.model, Some(stitched.prompt), corpus, Split::Test, 64)?.ppl);
            }
            println!();
        }
    }
    Ok(())
}
