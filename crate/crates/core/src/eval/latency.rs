use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate, GenerationRequest, LanguageModel};
use crate::prompt::init_prompt;
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub k: usize,
    pub prefix_len: usize,
    pub steps: usize,
    /// Median over repeats of (generation wall time, prefill included) / steps.
    pub median_ms_per_token: f64,
    pub tokens_per_sec: f64,
    /// Median per-token time relative to the `k = 0` row.
    pub overhead: f64,
}

pub const WARMUP_REPEATS: usize = 2;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times greedy generation of `steps` tokens after `prefix` for each prompt
/// length. Prompts are embedding-initialized (their values do not affect
/// cost). Configurations are interleaved within every repeat so slow drift
/// hits all of them alike; the first [`WARMUP_REPEATS`] rounds are discarded.
/// A `k = 0` row is always measured and used as the reference.
pub fn profile_latency<M: LanguageModel + ?Sized>(
    model: &M,
    ks: &[usize],
    prefix: &[TokenId],
    steps: usize,
    repeats: usize,
) -> Result<Vec<LatencyProfile>> {
    if repeats < 5 {
        return Err(Error::Config(format!("latency profiling needs ≥ 5 repeats, got {repeats}")));
    }
    if steps == 0 {
        return Err(Error::Config("latency profiling needs at least one generated token".into()));
    }
    let mut ks: Vec<usize> = ks.to_vec();
    if !ks.contains(&0) {
        ks.insert(0, 0);
    }
    let prompts: Vec<_> =
        ks.iter().map(|&k| init_prompt(k, model.token_embedding(), k as u64)).collect();
    let request = GenerationRequest { prefix: prefix.to_vec(), steps };
    let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(repeats); ks.len()];
    for round in 0..WARMUP_REPEATS + repeats {
        for (i, p) in prompts.iter().enumerate() {
            let start = Instant::now();
            let out = generate(model, &request, p.as_input())?;
            let ms = start.elapsed().as_secs_f64() * 1e3 / steps as f64;
            std::hint::black_box(out);
            if round >= WARMUP_REPEATS {
                times[i].push(ms);
            }
        }
    }
    let medians: Vec<f64> = times.into_iter().map(median).collect();
    let base = medians[ks.iter().position(|&k| k == 0).expect("k = 0 present")];
    Ok(ks
        .iter()
        .zip(medians)
        .map(|(&k, m)| LatencyProfile {
            k,
            prefix_len: prefix.len(),
            steps,
            median_ms_per_token: m,
            tokens_per_sec: 1e3 / m,
            overhead: if k == 0 { 1.0 } else { m / base },
        })
        .collect())
}
