use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::digest::tensor_digest;
use crate::error::{Error, Result};
use crate::kernel::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [self.vocab_size, self.embed_dim, self.n_layers, self.n_heads, self.ff_dim];
        if sizes.contains(&0) {
            return Err(Error::Config("all model sizes must be at least 1".into()));
        }
        if !self.embed_dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.max_positions < 2 {
            return Err(Error::Config("max_positions must be at least 2".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }
}

/// The six compressible projections of one block. Weights are stored
/// `[out × in]`, so quantization groups run along input columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Query,
    Key,
    Value,
    Output,
    Fc,
    Proj,
}

impl LinearKind {
    pub const ALL: [LinearKind; 6] = [
        LinearKind::Query,
        LinearKind::Key,
        LinearKind::Value,
        LinearKind::Output,
        LinearKind::Fc,
        LinearKind::Proj,
    ];

    pub fn short(self) -> &'static str {
        match self {
            LinearKind::Query => "attn.q",
            LinearKind::Key => "attn.k",
            LinearKind::Value => "attn.v",
            LinearKind::Output => "attn.o",
            LinearKind::Fc => "mlp.fc",
            LinearKind::Proj => "mlp.proj",
        }
    }

    pub fn name(self, layer: usize) -> String {
        format!("layers.{layer}.{}", self.short())
    }

    /// `(out, in)` for this projection.
    pub fn shape(self, cfg: &ModelConfig) -> (usize, usize) {
        let d = cfg.embed_dim;
        match self {
            LinearKind::Fc => (cfg.ff_dim, d),
            LinearKind::Proj => (d, cfg.ff_dim),
            _ => (d, d),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w_fc: Tensor,
    pub w_proj: Tensor,
}

impl LayerWeights {
    pub fn linear(&self, kind: LinearKind) -> &Tensor {
        match kind {
            LinearKind::Query => &self.wq,
            LinearKind::Key => &self.wk,
            LinearKind::Value => &self.wv,
            LinearKind::Output => &self.wo,
            LinearKind::Fc => &self.w_fc,
            LinearKind::Proj => &self.w_proj,
        }
    }

    pub fn linear_mut(&mut self, kind: LinearKind) -> &mut Tensor {
        match kind {
            LinearKind::Query => &mut self.wq,
            LinearKind::Key => &mut self.wk,
            LinearKind::Value => &mut self.wv,
            LinearKind::Output => &mut self.wo,
            LinearKind::Fc => &mut self.w_fc,
            LinearKind::Proj => &mut self.w_proj,
        }
    }

    pub fn view(&self) -> LayerView<'_> {
        LayerView {
            ln1_gain: &self.ln1_gain,
            ln1_bias: &self.ln1_bias,
            wq: &self.wq,
            wk: &self.wk,
            wv: &self.wv,
            wo: &self.wo,
            ln2_gain: &self.ln2_gain,
            ln2_bias: &self.ln2_bias,
            w_fc: &self.w_fc,
            w_proj: &self.w_proj,
        }
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w_fc,
            &mut self.w_proj,
        ]
    }
}

/// Borrowed view of one block, shared by dense and compressed models.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a> {
    pub ln1_gain: &'a Tensor,
    pub ln1_bias: &'a Tensor,
    pub wq: &'a Tensor,
    pub wk: &'a Tensor,
    pub wv: &'a Tensor,
    pub wo: &'a Tensor,
    pub ln2_gain: &'a Tensor,
    pub ln2_bias: &'a Tensor,
    pub w_fc: &'a Tensor,
    pub w_proj: &'a Tensor,
}

impl<'a> LayerView<'a> {
    pub fn tensors(&self) -> [(&'static str, &'a Tensor); 10] {
        [
            ("ln1.gain", self.ln1_gain),
            ("ln1.bias", self.ln1_bias),
            ("attn.q", self.wq),
            ("attn.k", self.wk),
            ("attn.v", self.wv),
            ("attn.o", self.wo),
            ("ln2.gain", self.ln2_gain),
            ("ln2.bias", self.ln2_bias),
            ("mlp.fc", self.w_fc),
            ("mlp.proj", self.w_proj),
        ]
    }
}

/// Anything the forward pass can run: dense weights or a compressed model.
pub trait LanguageModel {
    fn config(&self) -> &ModelConfig;
    fn token_embedding(&self) -> &Tensor;
    fn position_embedding(&self) -> &Tensor;
    fn final_norm(&self) -> (&Tensor, &Tensor);
    fn layer(&self, i: usize) -> LayerView<'_>;
    /// Content digest over every tensor the forward pass reads.
    fn fingerprint(&self) -> String;

    /// Every tensor in canonical order with its checkpoint name.
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding()),
            ("position_embedding".to_string(), self.position_embedding()),
        ];
        for i in 0..self.config().n_layers {
            for (name, t) in self.layer(i).tensors() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        let (g, b) = self.final_norm();
        out.push(("final_norm.gain".to_string(), g));
        out.push(("final_norm.bias".to_string(), b));
        out
    }
}

/// Full-precision parameters. The LM head is tied to `token_embedding`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<LayerWeights>,
    pub final_gain: Tensor,
    pub final_bias: Tensor,
}

pub const INIT_STD: f32 = 0.02;

/// Seeded Gaussian(0, 0.02) matrices, unit LayerNorm gains, zero biases.
pub fn init_model(config: &ModelConfig) -> Result<ModelWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
    let mut gaussian = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        Tensor::new(vec![rows, cols], data).expect("sized")
    };
    let d = config.embed_dim;
    let token_embedding = gaussian(config.vocab_size, d);
    let position_embedding = gaussian(config.max_positions, d);
    let layers = (0..config.n_layers)
        .map(|_| LayerWeights {
            ln1_gain: Tensor::full(&[d], 1.0),
            ln1_bias: Tensor::zeros(&[d]),
            wq: gaussian(d, d),
            wk: gaussian(d, d),
            wv: gaussian(d, d),
            wo: gaussian(d, d),
            ln2_gain: Tensor::full(&[d], 1.0),
            ln2_bias: Tensor::zeros(&[d]),
            w_fc: gaussian(config.ff_dim, d),
            w_proj: gaussian(d, config.ff_dim),
        })
        .collect();
    Ok(ModelWeights {
        config: config.clone(),
        token_embedding,
        position_embedding,
        layers,
        final_gain: Tensor::full(&[d], 1.0),
        final_bias: Tensor::zeros(&[d]),
    })
}

impl ModelWeights {
    /// Mutable parameters in the same order as [`LanguageModel::named_tensors`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for layer in self.layers.iter_mut() {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.final_gain);
        out.push(&mut self.final_bias);
        out
    }

    /// Rebuilds weights from tensors in canonical order (checkpoint loading).
    pub fn from_tensors(config: ModelConfig, mut tensors: Vec<Tensor>) -> Result<ModelWeights> {
        config.validate()?;
        let expected = 4 + 10 * config.n_layers;
        if tensors.len() != expected {
            return Err(Error::Shape(format!("expected {expected} tensors, got {}", tensors.len())));
        }
        let final_bias = tensors.pop().expect("len checked");
        let final_gain = tensors.pop().expect("len checked");
        let mut it = tensors.into_iter();
        let token_embedding = it.next().expect("len checked");
        let position_embedding = it.next().expect("len checked");
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            let mut n = || it.next().expect("len checked");
            layers.push(LayerWeights {
                ln1_gain: n(),
                ln1_bias: n(),
                wq: n(),
                wk: n(),
                wv: n(),
                wo: n(),
                ln2_gain: n(),
                ln2_bias: n(),
                w_fc: n(),
                w_proj: n(),
            });
        }
        let w = ModelWeights {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_gain,
            final_bias,
        };
        w.check_shapes()?;
        Ok(w)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let d = c.embed_dim;
        let want = |t: &Tensor, shape: &[usize], what: &str| {
            if t.shape() != shape {
                Err(Error::Shape(format!("{what}: expected {shape:?}, got {:?}", t.shape())))
            } else {
                Ok(())
            }
        };
        want(&self.token_embedding, &[c.vocab_size, d], "token_embedding")?;
        want(&self.position_embedding, &[c.max_positions, d], "position_embedding")?;
        for (i, l) in self.layers.iter().enumerate() {
            for kind in LinearKind::ALL {
                let (o, inp) = kind.shape(c);
                want(l.linear(kind), &[o, inp], &kind.name(i))?;
            }
            for t in [&l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias] {
                want(t, &[d], "layer norm")?;
            }
        }
        if self.layers.len() != c.n_layers {
            return Err(Error::Shape("layer count differs from config".into()));
        }
        Ok(())
    }
}

impl LanguageModel for ModelWeights {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn token_embedding(&self) -> &Tensor {
        &self.token_embedding
    }

    fn position_embedding(&self) -> &Tensor {
        &self.position_embedding
    }

    fn final_norm(&self) -> (&Tensor, &Tensor) {
        (&self.final_gain, &self.final_bias)
    }

    fn layer(&self, i: usize) -> LayerView<'_> {
        self.layers[i].view()
    }

    fn fingerprint(&self) -> String {
        tensor_digest(self.named_tensors().iter().map(|(n, t)| (n.as_str(), *t)))
    }
}
