//! Graph construction for the pre-LayerNorm decoder.
//!
//! Sequence layout per batch element: `[e₁ … e_k, x₀ … x_{n−1}]`. Prompt rows
//! enter as raw d-vectors and take positions `0..k`; data tokens take
//! `k..k+n`. Logits are produced only for the `n` data rows.

use super::weights::{LanguageModel, ModelConfig};
use crate::error::{Error, Result};
use crate::kernel::{Graph, NodeId, Tensor};
use crate::TokenId;

/// Node ids of the activations feeding each compressible projection.
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    /// LayerNorm output read by q, k, v.
    pub attn_in: NodeId,
    /// Attention output read by the output projection.
    pub attn_out: NodeId,
    /// LayerNorm output read by the MLP up-projection.
    pub mlp_in: NodeId,
    /// GELU output read by the MLP down-projection.
    pub mlp_hidden: NodeId,
}

pub struct ForwardPass {
    pub graph: Graph,
    /// `[batch·n × v]`
    pub logits: NodeId,
    pub prompt: Option<NodeId>,
    /// Leaves for every model tensor, in `named_tensors` order.
    pub params: Vec<NodeId>,
    pub trace: Vec<LayerTrace>,
    pub batch: usize,
    pub seq_len: usize,
}

/// Checks `k + n` against the context window and prompt width against the model.
pub fn check_fit(config: &ModelConfig, prompt: Option<&Tensor>, n: usize) -> Result<usize> {
    let k = prompt_len(prompt);
    if let Some(p) = prompt {
        if k > 0 && p.cols() != config.embed_dim {
            return Err(Error::Compatibility(format!(
                "prompt width {} but model embed_dim {}",
                p.cols(),
                config.embed_dim
            )));
        }
    }
    if k + n > config.max_positions {
        return Err(Error::Length(format!(
            "prompt {k} + tokens {n} exceeds max_positions {}",
            config.max_positions
        )));
    }
    Ok(k)
}

pub(crate) fn prompt_len(prompt: Option<&Tensor>) -> usize {
    match prompt {
        Some(p) if p.numel() > 0 => p.rows(),
        _ => 0,
    }
}

/// Builds the forward graph for equal-length sequences.
pub fn build_forward<M: LanguageModel + ?Sized>(
    model: &M,
    batch: &[&[TokenId]],
    prompt: Option<&Tensor>,
) -> Result<ForwardPass> {
    let cfg = model.config();
    let b = batch.len();
    if b == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let n = batch[0].len();
    if n == 0 || batch.iter().any(|s| s.len() != n) {
        return Err(Error::Data("batch sequences must be non-empty and equal length".into()));
    }
    let k = check_fit(cfg, prompt, n)?;
    let mut ids = Vec::with_capacity(b * n);
    for seq in batch {
        for &t in *seq {
            if t as usize >= cfg.vocab_size {
                return Err(Error::Index(format!("token {t} outside vocabulary")));
            }
            ids.push(t as usize);
        }
    }

    let mut g = Graph::new();
    let mut params = Vec::new();
    let mut leaf = |g: &mut Graph, t: &Tensor| {
        let id = g.leaf(t.clone());
        params.push(id);
        id
    };
    let wte = leaf(&mut g, model.token_embedding());
    let wpe = leaf(&mut g, model.position_embedding());
    let mut layer_leaves = Vec::with_capacity(cfg.n_layers);
    for i in 0..cfg.n_layers {
        let view = model.layer(i);
        let ids: Vec<NodeId> = view.tensors().iter().map(|(_, t)| leaf(&mut g, t)).collect();
        layer_leaves.push(ids);
    }
    let (fg, fb) = model.final_norm();
    let final_gain = leaf(&mut g, fg);
    let final_bias = leaf(&mut g, fb);

    let tok = g.gather(wte, ids)?;
    let (mut x, prompt_node) = match prompt {
        Some(p) if k > 0 => {
            let e = g.leaf(p.clone());
            (g.prepend_rows(e, tok, b)?, Some(e))
        }
        Some(p) => (tok, Some(g.leaf(p.clone()))),
        None => (tok, None),
    };
    let positions: Vec<usize> = (0..b).flat_map(|_| 0..k + n).collect();
    let pos = g.gather(wpe, positions)?;
    x = g.add(x, pos)?;

    let mut trace = Vec::with_capacity(cfg.n_layers);
    for l in &layer_leaves {
        let [ln1g, ln1b, wq, wk, wv, wo, ln2g, ln2b, wfc, wproj] = l[..] else {
            unreachable!("ten tensors per layer")
        };
        let h = g.layer_norm(x, ln1g, ln1b)?;
        let q = g.matmul_t(h, wq)?;
        let kk = g.matmul_t(h, wk)?;
        let v = g.matmul_t(h, wv)?;
        let a = g.causal_attention(q, kk, v, b, cfg.n_heads)?;
        let o = g.matmul_t(a, wo)?;
        x = g.add(x, o)?;
        let h2 = g.layer_norm(x, ln2g, ln2b)?;
        let f = g.matmul_t(h2, wfc)?;
        let f = g.gelu(f)?;
        let p = g.matmul_t(f, wproj)?;
        x = g.add(x, p)?;
        trace.push(LayerTrace { attn_in: h, attn_out: a, mlp_in: h2, mlp_hidden: f });
    }
    if k > 0 {
        x = g.drop_prefix_rows(x, b, k)?;
    }
    let x = g.layer_norm(x, final_gain, final_bias)?;
    let logits = g.matmul_t(x, wte)?;
    Ok(ForwardPass { graph: g, logits, prompt: prompt_node, params, trace, batch: b, seq_len: n })
}

/// Logits `[n × v]` for the data positions of one sequence.
pub fn forward_logits<M: LanguageModel + ?Sized>(
    model: &M,
    tokens: &[TokenId],
    prompt: Option<&Tensor>,
) -> Result<Tensor> {
    let pass = build_forward(model, &[tokens], prompt)?;
    Ok(pass.graph.value(pass.logits).clone())
}

/// Targets for next-token loss: row `t` predicts `x_{t+1}`, the last row of
/// each sequence predicts nothing, so `x₀` is never scored.
pub fn next_token_targets(batch: &[&[TokenId]]) -> Vec<Option<usize>> {
    let mut out = Vec::new();
    for seq in batch {
        for t in 0..seq.len() {
            out.push(seq.get(t + 1).map(|&x| x as usize));
        }
    }
    out
}

/// Forward pass plus mean next-token NLL node.
pub fn build_loss<M: LanguageModel + ?Sized>(
    model: &M,
    batch: &[&[TokenId]],
    prompt: Option<&Tensor>,
) -> Result<(ForwardPass, NodeId)> {
    if batch.iter().any(|s| s.len() < 2) {
        return Err(Error::Data("sequences need at least 2 tokens to score".into()));
    }
    let mut pass = build_forward(model, batch, prompt)?;
    let loss = pass.graph.cross_entropy(pass.logits, next_token_targets(batch))?;
    Ok((pass, loss))
}

/// Sum of next-token NLL (nats, f64) and scored-position count over
/// equal-length windows, evaluated `chunk` windows per forward pass.
pub fn batch_nll<M: LanguageModel + ?Sized>(
    model: &M,
    windows: &[&[TokenId]],
    prompt: Option<&Tensor>,
    chunk: usize,
) -> Result<(f64, usize)> {
    let (mut total, mut count) = (0.0, 0);
    for group in windows.chunks(chunk.max(1)) {
        let pass = build_forward(model, group, prompt)?;
        let logits = pass.graph.value(pass.logits);
        let mut row = 0;
        for w in group {
            for t in 0..w.len() {
                if let Some(&next) = w.get(t + 1) {
                    total += crate::kernel::tensor::row_nll(logits.row(row), next as usize);
                    count += 1;
                }
                row += 1;
            }
        }
    }
    Ok((total, count))
}

/// Sum of next-token NLL (nats) and number of scored positions for one window.
pub fn window_nll<M: LanguageModel + ?Sized>(
    model: &M,
    window: &[TokenId],
    prompt: Option<&Tensor>,
) -> Result<(f64, usize)> {
    let logits = forward_logits(model, window, prompt)?;
    let mut total = 0.0;
    for t in 0..window.len().saturating_sub(1) {
        total += crate::kernel::tensor::row_nll(logits.row(t), window[t + 1] as usize);
    }
    Ok((total, window.len().saturating_sub(1)))
}
