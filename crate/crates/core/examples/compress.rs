//! Compresses one trained model with every method and compares held-out
//! perplexity, then round-trips the 3-bit model through a checkpoint.

use cplm::compress::{calibrate, compress_model, CompressionSpec};
use cplm::data::{synth_corpus, Split, SynthSpec};
use cplm::eval::perplexity;
use cplm::harness::{load_compressed, save_checkpoint, Artifact};
use cplm::model::{init_model, train_base, BaseTrainConfig, LanguageModel, ModelConfig};

fn main() -> cplm::Result<()> {
    let corpus = synth_corpus(&SynthSpec::named("alpha", 200_000)?)?;
    let cfg = ModelConfig { vocab_size: 256, embed_dim: 64, n_layers: 2, n_heads: 4, ff_dim: 256, max_positions: 64, seed: 1 };
    let base = train_base(&init_model(&cfg)?, &corpus, &BaseTrainConfig { steps: 400, seq_len: 64, seed: 2, ..Default::default() })?
        .weights;
    let calib = calibrate(&base, &corpus, 16, 64, 0.01)?;

    let specs = [
        CompressionSpec::none(),
        CompressionSpec::rtn(3),
        CompressionSpec::obs_quant(3),
        CompressionSpec::rtn(2),
        CompressionSpec::obs_quant(2),
        CompressionSpec::magnitude(0.5),
        CompressionSpec::obs_prune(0.5),
        CompressionSpec::obs_prune(0.75),
        CompressionSpec::joint(0.5, 4),
    ];
    println!("{:<18} {:>8} {:>9}", "method", "pruned", "test PPL");
    for spec in &specs {
        let m = compress_model(&base, spec, Some(&calib))?;
        let ppl = perplexity(&m, None, &corpus, Split::Test, 64)?.ppl;
        println!("{:<18} {:>8} {:>9.4}", spec.label(), m.pruned_count(), ppl);
    }

    let m = compress_model(&base, &CompressionSpec::obs_quant(3), Some(&calib))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("obs-quant-3bit.ckpt");
    save_checkpoint(&Artifact::Compressed(m.clone()), &path)?;
    let back = load_compressed(&path)?;
    assert_eq!(back.fingerprint(), m.fingerprint());
    println!("checkpoint: {} bytes, fingerprint {}", std::fs::metadata(&path)?.len(), &m.fingerprint()[..16]);
    Ok(())
}
