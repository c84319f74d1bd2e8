use std::collections::BTreeMap;

use crate::data::{pack, Corpus, Split};
use crate::error::{Error, Result};
use crate::kernel::Tensor;
use crate::model::{build_forward, LanguageModel, LinearKind};

/// Second moment `Σ x xᵀ` of a projection's inputs (f64, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Hessian {
    pub dim: usize,
    pub data: Vec<f64>,
    pub samples: usize,
}

impl Hessian {
    pub fn zeros(dim: usize) -> Hessian {
        Hessian { dim, data: vec![0.0; dim * dim], samples: 0 }
    }

    pub fn identity(dim: usize) -> Hessian {
        let mut h = Hessian::zeros(dim);
        for i in 0..dim {
            h.data[i * dim + i] = 1.0;
        }
        h
    }

    /// Adds `xxᵀ` for every row `x` of `rows`.
    pub fn accumulate(&mut self, rows: &Tensor) -> Result<()> {
        if rows.cols() != self.dim {
            return Err(Error::Shape(format!("activation width {} vs {}", rows.cols(), self.dim)));
        }
        let xtx = rows.transpose().matmul(rows)?;
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                // average the two triangles so the result is exactly symmetric
                let v = (xtx.get(i, j) as f64 + xtx.get(j, i) as f64) * 0.5;
                self.data[i * n + j] += v;
            }
        }
        self.samples += rows.rows();
        Ok(())
    }

    pub fn from_activations(rows: &Tensor, damping: f64) -> Result<Hessian> {
        let mut h = Hessian::zeros(rows.cols());
        h.accumulate(rows)?;
        Ok(h.damped(damping))
    }

    /// `H + λ·mean(diag H)·I`; falls back to `λ·I` when the diagonal is all zero.
    pub fn damped(&self, lambda: f64) -> Hessian {
        let n = self.dim;
        let mean = (0..n).map(|i| self.data[i * n + i]).sum::<f64>() / n as f64;
        let add = if mean > 0.0 { lambda * mean } else { lambda };
        let mut out = self.clone();
        for i in 0..n {
            out.data[i * n + i] += add;
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (0..i).all(|j| self.data[i * n + j] == self.data[j * n + i]))
    }
}

/// Damped input Hessians keyed by projection name (`layers.{i}.attn.q`, …).
#[derive(Clone, Debug, Default)]
pub struct CalibStats {
    pub per_linear: BTreeMap<String, Hessian>,
    pub sequences: usize,
}

impl CalibStats {
    pub fn get(&self, layer: usize, kind: LinearKind) -> Option<&Hessian> {
        self.per_linear.get(&kind.name(layer))
    }
}

const CALIB_BATCH: usize = 4;

/// Collects damped input second moments for every compressible projection
/// from forward passes over the first `n_sequences` training windows.
pub fn calibrate<M: LanguageModel + ?Sized>(
    model: &M,
    corpus: &Corpus,
    n_sequences: usize,
    seq_len: usize,
    damping: f64,
) -> Result<CalibStats> {
    if n_sequences == 0 {
        return Err(Error::Config("calibration needs at least one sequence".into()));
    }
    let windows = pack(corpus.split(Split::Train), seq_len.max(2));
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "corpus `{}` is shorter than one calibration sequence of {seq_len}",
            corpus.name
        )));
    }
    let windows = &windows[..n_sequences.min(windows.len())];
    let cfg = model.config();
    let mut acc: Vec<[Hessian; 4]> = (0..cfg.n_layers)
        .map(|_| {
            [
                Hessian::zeros(cfg.embed_dim),
                Hessian::zeros(cfg.embed_dim),
                Hessian::zeros(cfg.embed_dim),
                Hessian::zeros(cfg.ff_dim),
            ]
        })
        .collect();
    for chunk in windows.chunks(CALIB_BATCH) {
        let pass = build_forward(model, chunk, None)?;
        for (l, t) in pass.trace.iter().enumerate() {
            for (slot, id) in [t.attn_in, t.attn_out, t.mlp_in, t.mlp_hidden].into_iter().enumerate()
            {
                acc[l][slot].accumulate(pass.graph.value(id))?;
            }
        }
    }
    let mut per_linear = BTreeMap::new();
    for (l, hs) in acc.into_iter().enumerate() {
        let [attn_in, attn_out, mlp_in, mlp_hidden] = hs.map(|h| h.damped(damping));
        for kind in [LinearKind::Query, LinearKind::Key, LinearKind::Value] {
            per_linear.insert(kind.name(l), attn_in.clone());
        }
        per_linear.insert(LinearKind::Output.name(l), attn_out);
        per_linear.insert(LinearKind::Fc.name(l), mlp_in);
        per_linear.insert(LinearKind::Proj.name(l), mlp_hidden);
    }
    Ok(CalibStats { per_linear, sequences: windows.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_sample() {
        let x = Tensor::new(vec![1, 3], vec![1.0, 0.0, 0.0]).unwrap();
        let h = Hessian::from_activations(&x, 0.01).unwrap();
        // mean diag = 1/3, damping adds 0.01/3 to every diagonal entry
        let d = 0.01 * (1.0 / 3.0);
        assert_eq!(h.get(0, 0), 1.0 + d);
        assert_eq!(h.get(1, 1), d);
        assert_eq!(h.get(0, 1), 0.0);
        assert!(h.is_symmetric());
        assert_eq!(h.samples, 1);
    }
}
