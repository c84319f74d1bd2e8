use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::soft::{init_prompt, PromptKind, Provenance, SoftPrompt};
use crate::compress::CompressedModel;
use crate::data::{pack, Corpus, Split};
use crate::digest::hex_digest;
use crate::error::{Error, Result};
use crate::kernel::{clip_global_norm, AdamW, AdamWConfig, Tensor};
use crate::model::{batch_nll, build_loss, check_fit, sample_windows, LanguageModel};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTrainConfig {
    pub k: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub total_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// Data tokens per training window (the prompt comes on top).
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_clip")]
    pub grad_clip: f32,
    /// Cap on validation windows; the first ones of the split form a fixed shard.
    #[serde(default)]
    pub val_windows: Option<usize>,
}

fn default_batch() -> usize {
    4
}

fn default_seq_len() -> usize {
    128
}

fn default_clip() -> f32 {
    1.0
}

impl PromptTrainConfig {
    pub fn new(k: usize, total_steps: usize, eval_every: usize, seed: u64) -> PromptTrainConfig {
        PromptTrainConfig {
            k,
            optimizer: AdamWConfig::default(),
            batch_size: default_batch(),
            total_steps,
            eval_every,
            seed,
            seq_len: default_seq_len(),
            grad_clip: default_clip(),
            val_windows: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be at least 1".into()));
        }
        if !self.total_steps.is_multiple_of(self.eval_every) {
            return Err(Error::Config(format!(
                "eval_every {} does not divide total_steps {}",
                self.eval_every, self.total_steps
            )));
        }
        if self.seq_len < 2 {
            return Err(Error::Config("seq_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    /// Mean training NLL over the steps since the previous point (none at step 0).
    pub train_nll: Option<f64>,
    pub val_ppl: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub points: Vec<EvalPoint>,
    pub best: usize,
}

impl TrainHistory {
    pub fn best_point(&self) -> Option<&EvalPoint> {
        self.points.get(self.best)
    }
}

/// Mean next-token NLL over the batch, data positions `1..n` only.
pub fn prompt_nll<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &SoftPrompt,
    batch: &[&[TokenId]],
) -> Result<f64> {
    let (total, count) = batch_nll(model, batch, prompt.as_input(), batch.len())?;
    Ok(total / count.max(1) as f64)
}

const VAL_CHUNK: usize = 8;

/// Validation windows: consecutive `seq_len` chunks of the split, optionally capped.
pub fn validation_shard(corpus: &Corpus, seq_len: usize, cap: Option<usize>) -> Vec<&[TokenId]> {
    let mut w = pack(corpus.split(Split::Validation), seq_len);
    if let Some(c) = cap {
        w.truncate(c);
    }
    w
}

pub fn shard_ppl<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: Option<&Tensor>,
    shard: &[&[TokenId]],
) -> Result<f64> {
    let (total, count) = batch_nll(model, shard, prompt, VAL_CHUNK)?;
    Ok((total / count.max(1) as f64).exp())
}

/// Learns a prompt for the frozen `model`. Only the prompt is updated; the
/// snapshot with the lowest validation perplexity (step 0 included) is returned.
pub fn train_prompt(
    model: &CompressedModel,
    corpus: &Corpus,
    cfg: &PromptTrainConfig,
) -> Result<(SoftPrompt, TrainHistory)> {
    cfg.validate()?;
    let config = model.config();
    check_fit(config, None, cfg.k + cfg.seq_len)?;
    if corpus.vocab_size > config.vocab_size {
        return Err(Error::Compatibility("corpus vocabulary larger than model's".into()));
    }
    let train = corpus.split(Split::Train);
    if train.len() < cfg.seq_len {
        return Err(Error::Data(format!("training split shorter than one window of {}", cfg.seq_len)));
    }
    let shard = validation_shard(corpus, cfg.seq_len, cfg.val_windows);
    if shard.is_empty() {
        return Err(Error::Data("validation split shorter than one window".into()));
    }

    let before = model.fingerprint();
    if before != model.construction_fingerprint() {
        return Err(Error::FrozenWeights {
            before: model.construction_fingerprint().to_string(),
            after: before,
        });
    }

    let mut e = init_prompt(cfg.k, model.token_embedding(), cfg.seed).embeddings().clone();
    let val = |e: &Tensor| shard_ppl(model, (cfg.k > 0).then_some(e), &shard);
    let mut history = TrainHistory {
        points: vec![EvalPoint { step: 0, train_nll: None, val_ppl: val(&e)? }],
        best: 0,
    };
    let mut best_e = e.clone();

    if cfg.k > 0 && cfg.total_steps > 0 {
        let mut opt = AdamW::new(cfg.optimizer, &[&e]);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let (mut since_sum, mut since_n) = (0.0f64, 0usize);
        for step in 0..cfg.total_steps {
            let batch = sample_windows(train, cfg.seq_len, cfg.batch_size, &mut rng);
            let (pass, loss) = build_loss(model, &batch, Some(&e))?;
            let value = pass.graph.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { step, loss: value as f64 });
            }
            since_sum += value as f64;
            since_n += 1;
            let prompt_node = pass.prompt.expect("prompt attached");
            let mut grads = pass.graph.backward(loss, &[prompt_node])?;
            let mut g = vec![grads.remove(&prompt_node).expect("requested gradient")];
            clip_global_norm(&mut g, cfg.grad_clip);
            opt.step(&mut [&mut e], &[&g[0]], cfg.optimizer.lr);

            let done = step + 1;
            if done % cfg.eval_every == 0 {
                let ppl = val(&e)?;
                history.points.push(EvalPoint {
                    step: done,
                    train_nll: Some(since_sum / since_n as f64),
                    val_ppl: ppl,
                });
                log::debug!("prompt step {done}: train {:.4} val ppl {ppl:.4}", since_sum / since_n as f64);
                (since_sum, since_n) = (0.0, 0);
                if ppl < history.points[history.best].val_ppl {
                    history.best = history.points.len() - 1;
                    best_e = e.clone();
                }
            }
        }
    }

    let after = model.fingerprint();
    if after != before {
        return Err(Error::FrozenWeights { before, after });
    }
    let provenance = Provenance {
        kind: PromptKind::Learned,
        source_fingerprint: Some(before),
        source_spec: Some(model.spec().clone()),
        corpus_id: Some(corpus.id.clone()),
        config_digest: Some(cfg.digest()),
    };
    Ok((SoftPrompt::new(best_e, provenance)?, history))
}
