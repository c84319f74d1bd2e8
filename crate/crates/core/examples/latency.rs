//! Per-token generation latency against prompt length.

use cplm::compress::{compress_model, CompressionSpec};
use cplm::eval::profile_latency;
use cplm::model::{init_model, ModelConfig};

fn main() -> cplm::Result<()> {
    let cfg = ModelConfig { vocab_size: 256, embed_dim: 128, n_layers: 4, n_heads: 4, ff_dim: 512, max_positions: 256, seed: 1 };
    let model = compress_model(&init_model(&cfg)?, &CompressionSpec::rtn(4), None)?;
    let prefix: Vec<u32> = (0..64).map(|i| (i * 7 % 256) as u32).collect();
    println!("{:>4} {:>12} {:>12} {:>9}", "k", "ms/token", "tokens/s", "overhead");
    for row in profile_latency(&model, &[4, 13, 32, 64, 128], &prefix, 64, 5)? {
        println!("{:>4} {:>12.4} {:>12.1} {:>9.3}", row.k, row.median_ms_per_token, row.tokens_per_sec, row.overhead);
    }
    Ok(())
}
