//! Trains a small byte-level transformer on the alpha corpus and samples
//! from it.

use cplm::compress::{compress_model, CompressionSpec};
use cplm::data::{synth_corpus, Split, SynthSpec, TokenizerSpec};
use cplm::eval::perplexity;
use cplm::model::{generate, init_model, train_base, BaseTrainConfig, GenerationRequest, ModelConfig};

fn main() -> cplm::Result<()> {
    let corpus = synth_corpus(&SynthSpec::named("alpha", 200_000)?)?;
    let cfg = ModelConfig { vocab_size: 256, embed_dim: 64, n_layers: 2, n_heads: 4, ff_dim: 256, max_positions: 64, seed: 1 };
    let init = init_model(&cfg)?;
    let out = train_base(&init, &corpus, &BaseTrainConfig { steps: 400, seq_len: 64, seed: 2, ..Default::default() })?;
    for (step, chunk) in out.losses.chunks(50).enumerate() {
        println!("steps {:>3}..{:>3}  mean loss {:.3}", step * 50, step * 50 + chunk.len(), chunk.iter().sum::<f32>() / chunk.len() as f32);
    }

    let model = compress_model(&out.weights, &CompressionSpec::none(), None)?;
    let report = perplexity(&model, None, &corpus, Split::Test, 64)?;
    println!("test PPL {:.3} over {} predicted tokens", report.ppl, report.tokens);

    let prefix = TokenizerSpec::Byte.tokenize(b"The ");
    let tokens = generate(&out.weights, &GenerationRequest { prefix, steps: 48 }, None)?;
    println!("sample: {:?}", String::from_utf8_lossy(&TokenizerSpec::Byte.detokenize(&tokens)?));
    Ok(())
}
