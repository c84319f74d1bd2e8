use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::tensor::row_nll;
use crate::kernel::Tensor;
use crate::model::{check_fit, forward_logits, LanguageModel};
use crate::TokenId;

/// One multiple-choice item scored by continuation likelihood.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCTask {
    pub context: Vec<TokenId>,
    pub choices: Vec<Vec<TokenId>>,
    pub gold: usize,
}

impl MCTask {
    pub fn validate(&self) -> Result<()> {
        if self.context.is_empty() {
            return Err(Error::Data("task context must not be empty".into()));
        }
        if self.choices.is_empty() || self.choices.iter().any(Vec::is_empty) {
            return Err(Error::Data("task needs non-empty choices".into()));
        }
        if self.gold >= self.choices.len() {
            return Err(Error::Data(format!("gold index {} out of range", self.gold)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Log-likelihood divided by the choice's token count.
    PerToken,
    /// Raw summed log-likelihood.
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub accuracy: f64,
    pub std_error: f64,
    pub n: usize,
    pub predictions: Vec<usize>,
}

/// Summed log-probability of `choice` following `context`.
pub fn choice_logprob<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: Option<&Tensor>,
    context: &[TokenId],
    choice: &[TokenId],
) -> Result<f64> {
    let mut seq = Vec::with_capacity(context.len() + choice.len());
    seq.extend_from_slice(context);
    seq.extend_from_slice(choice);
    check_fit(model.config(), prompt, seq.len())?;
    let logits = forward_logits(model, &seq, prompt)?;
    let c = context.len();
    Ok(-(0..choice.len()).map(|i| row_nll(logits.row(c + i - 1), choice[i] as usize)).sum::<f64>())
}

pub fn mc_accuracy<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: Option<&Tensor>,
    tasks: &[MCTask],
) -> Result<McResult> {
    mc_accuracy_with(model, prompt, tasks, Scoring::PerToken)
}

/// Accuracy and its binomial standard error `√(p(1−p)/N)`; ties go to the lowest choice.
pub fn mc_accuracy_with<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: Option<&Tensor>,
    tasks: &[MCTask],
    scoring: Scoring,
) -> Result<McResult> {
    if tasks.is_empty() {
        return Err(Error::Data("no tasks to score".into()));
    }
    let mut predictions = Vec::with_capacity(tasks.len());
    let mut correct = 0usize;
    for task in tasks {
        task.validate()?;
        let mut best = (0, f64::NEG_INFINITY);
        for (i, choice) in task.choices.iter().enumerate() {
            let lp = choice_logprob(model, prompt, &task.context, choice)?;
            let score = match scoring {
                Scoring::PerToken => lp / choice.len() as f64,
                Scoring::Sum => lp,
            };
            if score > best.1 {
                best = (i, score);
            }
        }
        predictions.push(best.0);
        correct += (best.0 == task.gold) as usize;
    }
    let n = tasks.len();
    let p = correct as f64 / n as f64;
    Ok(McResult { accuracy: p, std_error: (p * (1.0 - p) / n as f64).sqrt(), n, predictions })
}

/// Continuation tasks cut from `tokens`: the gold choice is the true
/// continuation of the context, distractors are equally long spans from
/// other random offsets. The gold slot is drawn uniformly.
pub fn continuation_tasks(
    tokens: &[TokenId],
    n_tasks: usize,
    n_choices: usize,
    context_len: usize,
    choice_len: usize,
    seed: u64,
) -> Result<Vec<MCTask>> {
    let span = context_len + choice_len;
    if n_choices < 2 || context_len == 0 || choice_len == 0 {
        return Err(Error::Config("need ≥ 2 choices and non-empty context and choices".into()));
    }
    if tokens.len() < 2 * span {
        return Err(Error::Data(format!("{} tokens too few for tasks of span {span}", tokens.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = tokens.len() - span;
    let mut out = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let s = rng.random_range(0..=last);
        let context = tokens[s..s + context_len].to_vec();
        let gold_span = &tokens[s + context_len..s + span];
        let gold = rng.random_range(0..n_choices);
        let mut choices = Vec::with_capacity(n_choices);
        for i in 0..n_choices {
            if i == gold {
                choices.push(gold_span.to_vec());
                continue;
            }
            // resample spans identical to the gold one, a bounded number of times
            let mut d = rng.random_range(0..=tokens.len() - choice_len);
            for _ in 0..64 {
                if &tokens[d..d + choice_len] != gold_span {
                    break;
                }
                d = rng.random_range(0..=tokens.len() - choice_len);
            }
            choices.push(tokens[d..d + choice_len].to_vec());
        }
        out.push(MCTask { context, choices, gold });
    }
    Ok(out)
}
