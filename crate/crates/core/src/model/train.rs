use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::build_loss;
use super::weights::ModelWeights;
use crate::data::{Corpus, Split};
use crate::error::{Error, Result};
use crate::kernel::{clip_global_norm, AdamW, AdamWConfig};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseTrainConfig {
    pub steps: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seq_len: usize,
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_clip")]
    pub grad_clip: f32,
}

fn default_warmup() -> usize {
    100
}

fn default_clip() -> f32 {
    1.0
}

impl Default for BaseTrainConfig {
    fn default() -> Self {
        BaseTrainConfig {
            steps: 1000,
            lr: 3e-3,
            batch_size: 4,
            seq_len: 128,
            seed: 0,
            warmup_steps: default_warmup(),
            grad_clip: default_clip(),
        }
    }
}

pub struct BaseTrainOutcome {
    pub weights: ModelWeights,
    /// Training loss (mean NLL, nats) at every step.
    pub losses: Vec<f32>,
}

/// Linear warmup then cosine decay to 10% of the peak rate.
pub fn lr_at(step: usize, total: usize, warmup: usize, peak: f32) -> f32 {
    if step < warmup {
        return peak * (step + 1) as f32 / warmup as f32;
    }
    let span = (total - warmup.min(total)).max(1) as f32;
    let progress = ((step - warmup) as f32 / span).min(1.0);
    let cosine = 0.5 * (1.0 + (std::f32::consts::PI * progress).cos());
    peak * (0.1 + 0.9 * cosine)
}

/// Uniform random windows of `seq_len` from `tokens`.
pub fn sample_windows<'a>(
    tokens: &'a [TokenId],
    seq_len: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a [TokenId]> {
    let max_start = tokens.len() - seq_len;
    (0..count)
        .map(|_| {
            let s = rng.random_range(0..=max_start);
            &tokens[s..s + seq_len]
        })
        .collect()
}

/// Next-token training of every parameter.
pub fn train_base(
    weights: &ModelWeights,
    corpus: &Corpus,
    cfg: &BaseTrainConfig,
) -> Result<BaseTrainOutcome> {
    let train = corpus.split(Split::Train);
    if train.is_empty() {
        return Err(Error::Data(format!("corpus `{}` has an empty training split", corpus.name)));
    }
    if train.len() < cfg.seq_len || cfg.seq_len < 2 {
        return Err(Error::Data(format!(
            "training split of {} tokens cannot hold a window of {}",
            train.len(),
            cfg.seq_len
        )));
    }
    if corpus.vocab_size > weights.config.vocab_size {
        return Err(Error::Compatibility("corpus vocabulary larger than model's".into()));
    }
    let mut w = weights.clone();
    let mut losses = Vec::with_capacity(cfg.steps);
    if cfg.steps == 0 {
        return Ok(BaseTrainOutcome { weights: w, losses });
    }
    let adam_cfg = AdamWConfig { lr: cfg.lr, weight_decay: 0.0, ..AdamWConfig::default() };
    let mut opt = {
        let params = w.params_mut();
        let refs: Vec<&_> = params.iter().map(|p| &**p).collect();
        AdamW::new(adam_cfg, &refs)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for step in 0..cfg.steps {
        let batch = sample_windows(train, cfg.seq_len, cfg.batch_size, &mut rng);
        let (pass, loss) = build_loss(&w, &batch, None)?;
        let value = pass.graph.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Divergence { step, loss: value as f64 });
        }
        losses.push(value);
        let grads = pass.graph.backward(loss, &pass.params)?;
        let mut grads: Vec<_> = pass.params.iter().map(|id| grads[id].clone()).collect();
        clip_global_norm(&mut grads, cfg.grad_clip);
        let lr = lr_at(step, cfg.steps, cfg.warmup_steps, cfg.lr);
        let grad_refs: Vec<&_> = grads.iter().collect();
        opt.step(&mut w.params_mut(), &grad_refs, lr);
        if step % 100 == 0 {
            log::debug!("base step {step}: loss {value:.4}");
        }
    }
    Ok(BaseTrainOutcome { weights: w, losses })
}
