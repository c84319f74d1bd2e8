//! Shared fixtures: seeded random matrices and a straight-line f64
//! reference forward written independently of the graph code.

#![allow(dead_code)]

use cplm::compress::{block_quotas, quantize_rtn, Grid, Hessian};
use cplm::kernel::Tensor;
use cplm::model::{init_model, LanguageModel, ModelConfig, ModelWeights};
use cplm::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f32) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f32 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f32, hi: f32) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Correlated calibration inputs: `samples × dim` rows of `z · M`, where
/// `M` is a random Gaussian mixing matrix whose output features are
/// rescaled log-uniformly over two decades, like real activations.
pub fn correlated_inputs(rng: &mut ChaCha8Rng, samples: usize, dim: usize) -> Tensor {
    let z = gaussian(rng, samples, dim, 1.0);
    let mut mix = gaussian(rng, dim, dim, 1.0 / (dim as f32).sqrt());
    for j in 0..dim {
        let s = 10f32.powf(rng.random_range(-1.0..1.0));
        for i in 0..dim {
            mix.set(i, j, mix.get(i, j) * s);
        }
    }
    z.matmul(&mix).unwrap()
}

/// Damped Hessian of `x` plus the same samples laid out `[dim × samples]`
/// for `reconstruction_error`.
pub fn hessian_and_columns(x: &Tensor, damping: f64) -> (Hessian, Tensor) {
    (Hessian::from_activations(x, damping).unwrap(), x.transpose())
}

pub fn tiny_config(vocab: usize, d: usize, layers: usize, heads: usize, max_positions: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        embed_dim: d,
        n_layers: layers,
        n_heads: heads,
        ff_dim: 4 * d,
        max_positions,
        seed,
    }
}

/// A random model whose LayerNorm gains and biases are also perturbed, so
/// every parameter matters to the output.
pub fn scrambled_model(cfg: &ModelConfig, std: f32) -> ModelWeights {
    let mut w = init_model(cfg).unwrap();
    let mut r = rng(cfg.seed ^ 0xABCD);
    for t in w.params_mut() {
        for v in t.data_mut() {
            let z: f32 = StandardNormal.sample(&mut r);
            *v += z * std;
        }
    }
    w
}

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).iter().map(|&v| v as f64).collect()).collect()
}

fn vec_of(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    let r = 1.0 / (var + 1e-5).sqrt();
    x.iter().zip(g).zip(b).map(|((v, g), b)| (v - mean) * r * g + b).collect()
}

/// `y = W x` with `W` stored `[out × in]`.
fn apply(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

/// Logits `[n × v]` for the data rows of `[prompt ; tokens]`, computed one
/// scalar at a time in f64.
pub fn reference_logits<M: LanguageModel>(model: &M, prompt: Option<&[Vec<f64>]>, tokens: &[TokenId]) -> Mat {
    let cfg = model.config().clone();
    let wte = to_mat(model.token_embedding());
    let wpe = to_mat(model.position_embedding());
    let prompt = prompt.unwrap_or(&[]);
    let k = prompt.len();
    let mut xs: Mat = prompt.to_vec();
    xs.extend(tokens.iter().map(|&t| wte[t as usize].clone()));
    for (p, x) in xs.iter_mut().enumerate() {
        for (v, e) in x.iter_mut().zip(&wpe[p]) {
            *v += e;
        }
    }
    let hd = cfg.embed_dim / cfg.n_heads;
    for l in 0..cfg.n_layers {
        let view = model.layer(l);
        let named: std::collections::HashMap<&str, &Tensor> = view.tensors().into_iter().collect();
        let get = |n: &str| named[n];
        let (g1, b1) = (vec_of(get("ln1.gain")), vec_of(get("ln1.bias")));
        let (wq, wk, wv, wo) =
            (to_mat(get("attn.q")), to_mat(get("attn.k")), to_mat(get("attn.v")), to_mat(get("attn.o")));
        let (g2, b2) = (vec_of(get("ln2.gain")), vec_of(get("ln2.bias")));
        let (wfc, wproj) = (to_mat(get("mlp.fc")), to_mat(get("mlp.proj")));

        let h: Mat = xs.iter().map(|x| ln(x, &g1, &b1)).collect();
        let q: Mat = h.iter().map(|x| apply(&wq, x)).collect();
        let kk: Mat = h.iter().map(|x| apply(&wk, x)).collect();
        let v: Mat = h.iter().map(|x| apply(&wv, x)).collect();
        let t = xs.len();
        let mut att = vec![vec![0.0; cfg.embed_dim]; t];
        for head in 0..cfg.n_heads {
            let s = head * hd..(head + 1) * hd;
            for i in 0..t {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| {
                        s.clone().map(|c| q[i][c] * kk[j][c]).sum::<f64>() / (hd as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (j, ej) in e.iter().enumerate() {
                    for c in s.clone() {
                        att[i][c] += ej / z * v[j][c];
                    }
                }
            }
        }
        for i in 0..t {
            let o = apply(&wo, &att[i]);
            for (x, y) in xs[i].iter_mut().zip(o) {
                *x += y;
            }
            let h2 = ln(&xs[i], &g2, &b2);
            let f: Vec<f64> = apply(&wfc, &h2).into_iter().map(gelu).collect();
            let p = apply(&wproj, &f);
            for (x, y) in xs[i].iter_mut().zip(p) {
                *x += y;
            }
        }
    }
    let (fg, fb) = model.final_norm();
    let (fg, fb) = (vec_of(fg), vec_of(fb));
    xs[k..].iter().map(|x| apply(&wte, &ln(x, &fg, &fb))).collect()
}

/// Mean next-token NLL of `tokens` under the reference forward.
pub fn reference_nll<M: LanguageModel>(model: &M, prompt: Option<&[Vec<f64>]>, tokens: &[TokenId]) -> f64 {
    let logits = reference_logits(model, prompt, tokens);
    let mut total = 0.0;
    for t in 0..tokens.len() - 1 {
        let row = &logits[t];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - row[tokens[t + 1] as usize];
    }
    total / (tokens.len() - 1) as f64
}

pub fn rows_f64(t: &Tensor) -> Vec<Vec<f64>> {
    to_mat(t)
}

pub fn random_tokens(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<TokenId> {
    (0..n).map(|_| rng.random_range(0..vocab as TokenId)).collect()
}

/// Gradient check: ∂NLL/∂E from the tape against central
/// differences (h = 1e-3) of the f64 reference forward, on a 2-layer d=16
/// model with k=4 prompt rows. Returns the max relative error over
/// `coords` sampled coordinates.
pub fn prompt_gradient_max_rel_error(coords: usize) -> f64 {
    use cplm::model::build_loss;
    let cfg = tiny_config(32, 16, 2, 2, 16, 11);
    let model = scrambled_model(&cfg, 0.3);
    let mut r = rng(12);
    let prompt = gaussian(&mut r, 4, 16, 0.5);
    let tokens = random_tokens(&mut r, 10, 32);
    let (pass, loss) = build_loss(&model, &[&tokens], Some(&prompt)).unwrap();
    let node = pass.prompt.unwrap();
    let grads = pass.graph.backward(loss, &[node]).unwrap();
    let analytic = &grads[&node];
    let scale = analytic.data().iter().fold(0.0f64, |m, &a| m.max(a.abs() as f64));

    let base = rows_f64(&prompt);
    let h = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let (i, j) = (r.random_range(0..4), r.random_range(0..16));
        let mut plus = base.clone();
        plus[i][j] += h;
        let mut minus = base.clone();
        minus[i][j] -= h;
        let fd = (reference_nll(&model, Some(&plus), &tokens) - reference_nll(&model, Some(&minus), &tokens)) / (2.0 * h);
        let a = analytic.get(i, j) as f64;
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max(rel);
    }
    worst
}

pub struct CompensationCell {
    pub label: String,
    pub wins: usize,
    pub median_obs: f64,
    pub median_baseline: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    0.5 * (xs[(n - 1) / 2] + xs[n / 2])
}

/// Paired layerwise trials on seeded 32×32 weights with correlated inputs:
/// second-order pruning against magnitude pruning at 50/62.5/75% sparsity,
/// second-order quantization against round-to-nearest at 2/3/4 bits with
/// the default group size of 32.
pub fn compensation_cells() -> Vec<CompensationCell> {
    use cplm::compress::{prune_magnitude, prune_obs, quantize_obs, quantize_rtn, reconstruction_error};
    let mut cells = Vec::new();
    let settings: Vec<(String, Option<f64>, Option<u8>)> = [0.5, 0.625, 0.75]
        .iter()
        .map(|&s| (format!("sparsity {s}"), Some(s), None))
        .chain([2u8, 3, 4].iter().map(|&b| (format!("{b}-bit"), None, Some(b))))
        .collect();
    for (label, sparsity, bits) in settings {
        let (mut obs, mut base) = (Vec::new(), Vec::new());
        for trial in 0..20u64 {
            let mut r = rng(1000 + trial);
            let w = gaussian(&mut r, 32, 32, 1.0);
            let x = correlated_inputs(&mut r, 512, 32);
            let (h, cols) = hessian_and_columns(&x, 0.01);
            let (a, b) = match (sparsity, bits) {
                (Some(s), _) => (prune_obs(&w, &h, s, 16).unwrap(), prune_magnitude(&w, s).unwrap()),
                (_, Some(bits)) => (quantize_obs(&w, &h, bits, 32, 16).unwrap(), quantize_rtn(&w, bits, 32).unwrap()),
                _ => unreachable!(),
            };
            obs.push(reconstruction_error(&w, &a, &cols).unwrap());
            base.push(reconstruction_error(&w, &b, &cols).unwrap());
        }
        let wins = obs.iter().zip(&base).filter(|(o, b)| o <= b).count();
        cells.push(CompensationCell { label, wins, median_obs: median(obs), median_baseline: median(base) });
    }
    cells
}

/// Nearest of all `2^bits` levels of the group's grid, ties to the lower code.
pub fn brute_force_codes(values: &[f32], bits: u8) -> Vec<u8> {
    let g = Grid::fit(values, bits);
    values
        .iter()
        .map(|&v| {
            let mut best = 0u8;
            for c in 0..=Grid::max_code(bits) as u8 {
                if (g.dequant(c) - v).abs() < (g.dequant(best) - v).abs() {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// RTN codes that differ from the brute-force oracle over 50 random 8×8
/// matrices at 2, 3 and 4 bits. Also checks every group's grid.
pub fn rtn_oracle_mismatches(seed: u64, group_size: usize) -> usize {
    let mut r = rng(seed);
    let mut mismatches = 0;
    for bits in [2u8, 3, 4] {
        for _ in 0..50 {
            let w = gaussian(&mut r, 8, 8, 1.0);
            let cl = quantize_rtn(&w, bits, group_size).unwrap();
            let codes = cl.codes().unwrap();
            for row in 0..8 {
                for (gi, start) in (0..8).step_by(group_size).enumerate() {
                    let vals = &w.row(row)[start..start + group_size];
                    assert_eq!(cl.grid(row, gi).unwrap(), Grid::fit(vals, bits));
                    let want = brute_force_codes(vals, bits);
                    mismatches += (0..group_size).filter(|&c| codes[row * 8 + start + c] != want[c]).count();
                }
            }
        }
    }
    mismatches
}

/// Per-(row, block) magnitude pruning with the OBS pruner's quotas.
pub fn blockwise_magnitude_keep(w: &Tensor, sparsity: f64, bs: usize) -> Vec<bool> {
    let (rows, cols) = (w.rows(), w.cols());
    let quotas = block_quotas(rows, cols, bs, sparsity);
    let nb = cols.div_ceil(bs);
    let mut keep = vec![true; rows * cols];
    for r in 0..rows {
        for b in 0..nb {
            let mut idx: Vec<usize> = (b * bs..((b + 1) * bs).min(cols)).collect();
            idx.sort_by(|&i, &j| w.get(r, i).abs().total_cmp(&w.get(r, j).abs()).then(i.cmp(&j)));
            for &j in &idx[..quotas[r * nb + b]] {
                keep[r * cols + j] = false;
            }
        }
    }
    keep
}

/// A seconds-scale experiment config covering every pipeline section.
pub const TINY_EXPERIMENT: &str = include_str!("../../configs/tiny.json");
