//! Greedy decoding with a key/value cache.

use super::forward::{check_fit, prompt_len};
use super::weights::LanguageModel;
use crate::error::{Error, Result};
use crate::kernel::tensor::{gelu, layer_norm, softmax_in_place};
use crate::kernel::{Tensor, LAYER_NORM_EPS};
use crate::TokenId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationRequest {
    pub prefix: Vec<TokenId>,
    pub steps: usize,
}

/// Incremental forward over one sequence, caching per-layer keys and values.
pub struct Decoder<'m, M: LanguageModel + ?Sized> {
    model: &'m M,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl<'m, M: LanguageModel + ?Sized> Decoder<'m, M> {
    pub fn new(model: &'m M) -> Self {
        let n = model.config().n_layers;
        Decoder { model, keys: vec![Vec::new(); n], values: vec![Vec::new(); n], len: 0 }
    }

    pub fn position(&self) -> usize {
        self.len
    }

    /// Feeds prompt rows and tokens; returns logits of the last fed position.
    pub fn prefill(&mut self, prompt: Option<&Tensor>, tokens: &[TokenId]) -> Result<Vec<f32>> {
        let cfg = self.model.config();
        check_fit(cfg, prompt, self.len + tokens.len())?;
        let d = cfg.embed_dim;
        let k = prompt_len(prompt);
        let mut rows = Vec::with_capacity((k + tokens.len()) * d);
        if let Some(p) = prompt.filter(|_| k > 0) {
            rows.extend_from_slice(p.data());
        }
        for &t in tokens {
            if t as usize >= cfg.vocab_size {
                return Err(Error::Index(format!("token {t} outside vocabulary")));
            }
            rows.extend_from_slice(self.model.token_embedding().row(t as usize));
        }
        if rows.is_empty() {
            return Err(Error::Data("nothing to feed".into()));
        }
        let x = Tensor::new(vec![rows.len() / d, d], rows)?;
        self.feed(x)
    }

    pub fn step(&mut self, token: TokenId) -> Result<Vec<f32>> {
        self.prefill(None, &[token])
    }

    fn feed(&mut self, mut x: Tensor) -> Result<Vec<f32>> {
        let cfg = self.model.config().clone();
        let (rows, d) = (x.rows(), cfg.embed_dim);
        let start = self.len;
        if start + rows > cfg.max_positions {
            return Err(Error::Length(format!(
                "position {} exceeds max_positions {}",
                start + rows,
                cfg.max_positions
            )));
        }
        let wpe = self.model.position_embedding();
        for r in 0..rows {
            for (o, p) in x.row_mut(r).iter_mut().zip(wpe.row(start + r)) {
                *o += p;
            }
        }
        let heads = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f32).sqrt();
        for l in 0..cfg.n_layers {
            let view = self.model.layer(l);
            let h = layer_norm(&x, view.ln1_gain, view.ln1_bias, LAYER_NORM_EPS)?;
            let q = h.matmul_t(view.wq)?;
            let kk = h.matmul_t(view.wk)?;
            let v = h.matmul_t(view.wv)?;
            self.keys[l].extend_from_slice(kk.data());
            self.values[l].extend_from_slice(v.data());
            let (kc, vc) = (&self.keys[l], &self.values[l]);
            let mut att = vec![0.0f32; rows * d];
            let mut scores = vec![0.0f32; start + rows];
            for r in 0..rows {
                let pos = start + r;
                for hh in 0..heads {
                    let qh = &q.row(r)[hh * dh..(hh + 1) * dh];
                    for (j, s) in scores[..=pos].iter_mut().enumerate() {
                        let kj = &kc[j * d + hh * dh..j * d + (hh + 1) * dh];
                        *s = qh.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                    }
                    softmax_in_place(&mut scores[..=pos]);
                    let out = &mut att[r * d + hh * dh..r * d + (hh + 1) * dh];
                    for (j, &p) in scores[..=pos].iter().enumerate() {
                        let vj = &vc[j * d + hh * dh..j * d + (hh + 1) * dh];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += p * vv;
                        }
                    }
                }
            }
            let att = Tensor::new(vec![rows, d], att)?;
            x = x.add(&att.matmul_t(view.wo)?)?;
            let h2 = layer_norm(&x, view.ln2_gain, view.ln2_bias, LAYER_NORM_EPS)?;
            let f = gelu(&h2.matmul_t(view.w_fc)?);
            x = x.add(&f.matmul_t(view.w_proj)?)?;
        }
        self.len += rows;
        let last = Tensor::new(vec![1, d], x.row(rows - 1).to_vec())?;
        let (g, b) = self.model.final_norm();
        let last = layer_norm(&last, g, b, LAYER_NORM_EPS)?;
        Ok(last.matmul_t(self.model.token_embedding())?.into_data())
    }
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(logits: &[f32]) -> TokenId {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Greedy decode: returns the prefix followed by `steps` generated tokens.
pub fn generate<M: LanguageModel + ?Sized>(
    model: &M,
    request: &GenerationRequest,
    prompt: Option<&Tensor>,
) -> Result<Vec<TokenId>> {
    if request.prefix.is_empty() {
        return Err(Error::Data("generation needs a non-empty prefix".into()));
    }
    let total = request.prefix.len() + request.steps;
    check_fit(model.config(), prompt, total)?;
    let mut out = request.prefix.clone();
    if request.steps == 0 {
        return Ok(out);
    }
    let mut dec = Decoder::new(model);
    let mut logits = dec.prefill(prompt, &request.prefix)?;
    for s in 0..request.steps {
        let next = argmax(&logits);
        out.push(next);
        if s + 1 < request.steps {
            logits = dec.step(next)?;
        }
    }
    Ok(out)
}
