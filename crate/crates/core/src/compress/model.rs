use sha2::{Digest, Sha256};

use super::calib::CalibStats;
use super::linear::CompressedLinear;
use super::prune::{prune_magnitude, prune_obs};
use super::quant::{joint_compress, quantize_obs, quantize_rtn};
use super::spec::{CompressionSpec, Method};
use crate::error::{Error, Result};
use crate::kernel::Tensor;
use crate::model::{LanguageModel, LayerView, LinearKind, ModelConfig, ModelWeights};

/// A model whose attention and MLP projections are compressed. Embeddings,
/// positions and LayerNorms stay full precision. Fields are private and
/// there is no mutable access; [`CompressedModel::verify`] recomputes the
/// content fingerprint and compares it with the one taken at construction.
#[derive(Clone, Debug)]
pub struct CompressedModel {
    /// Full-precision parts, with every projection replaced by its reconstruction.
    dense: ModelWeights,
    linears: Vec<[CompressedLinear; 6]>,
    spec: CompressionSpec,
    fingerprint: String,
}

impl CompressedModel {
    /// Assembles a model from its parts. The projection tensors inside
    /// `base` are ignored and replaced by the reconstructions of `linears`.
    pub fn from_parts(
        mut base: ModelWeights,
        linears: Vec<[CompressedLinear; 6]>,
        spec: CompressionSpec,
    ) -> Result<CompressedModel> {
        base.check_shapes()?;
        if linears.len() != base.config.n_layers {
            return Err(Error::Shape("one projection set per layer required".into()));
        }
        for (l, set) in linears.iter().enumerate() {
            for (kind, cl) in LinearKind::ALL.into_iter().zip(set) {
                if cl.shape() != kind.shape(&base.config) {
                    return Err(Error::Shape(format!("{} has shape {:?}", kind.name(l), cl.shape())));
                }
                *base.layers[l].linear_mut(kind) = cl.reconstruct();
            }
        }
        let mut m = CompressedModel { dense: base, linears, spec, fingerprint: String::new() };
        m.fingerprint = m.compute_fingerprint();
        Ok(m)
    }

    pub fn spec(&self) -> &CompressionSpec {
        &self.spec
    }

    pub fn linear(&self, layer: usize, kind: LinearKind) -> &CompressedLinear {
        &self.linears[layer][kind as usize]
    }

    pub fn linears(&self) -> &[[CompressedLinear; 6]] {
        &self.linears
    }

    /// Dense view (reconstructed projections), e.g. for checkpointing the
    /// full-precision parts.
    pub fn dense(&self) -> &ModelWeights {
        &self.dense
    }

    /// Fingerprint recorded at construction.
    pub fn construction_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Total pruned entries over all projections.
    pub fn pruned_count(&self) -> usize {
        self.linears.iter().flatten().map(CompressedLinear::pruned_count).sum()
    }

    pub fn verify(&self) -> Result<()> {
        let now = self.compute_fingerprint();
        if now != self.fingerprint {
            return Err(Error::FrozenWeights { before: self.fingerprint.clone(), after: now });
        }
        Ok(())
    }

    fn compute_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dense.fingerprint().as_bytes());
        for cl in self.linears.iter().flatten() {
            h.update(cl.fingerprint().as_bytes());
        }
        h.update(serde_json::to_vec(&self.spec).expect("spec serializes"));
        hex::encode(h.finalize())
    }
}

impl LanguageModel for CompressedModel {
    fn config(&self) -> &ModelConfig {
        &self.dense.config
    }

    fn token_embedding(&self) -> &Tensor {
        &self.dense.token_embedding
    }

    fn position_embedding(&self) -> &Tensor {
        &self.dense.position_embedding
    }

    fn final_norm(&self) -> (&Tensor, &Tensor) {
        (&self.dense.final_gain, &self.dense.final_bias)
    }

    fn layer(&self, i: usize) -> LayerView<'_> {
        self.dense.layers[i].view()
    }

    fn fingerprint(&self) -> String {
        self.compute_fingerprint()
    }
}

/// Compresses every projection of `weights` according to `spec`. Methods
/// with second-order compensation need `calib` (from [`super::calibrate`]).
pub fn compress_model(
    weights: &ModelWeights,
    spec: &CompressionSpec,
    calib: Option<&CalibStats>,
) -> Result<CompressedModel> {
    spec.validate()?;
    weights.check_shapes()?;
    if spec.method.needs_calibration() && calib.is_none() {
        return Err(Error::Config(format!("{:?} needs calibration statistics", spec.method)));
    }
    let mut linears = Vec::with_capacity(weights.config.n_layers);
    for (l, layer) in weights.layers.iter().enumerate() {
        let mut set = Vec::with_capacity(6);
        for kind in LinearKind::ALL {
            let name = kind.name(l);
            let w = layer.linear(kind);
            let hessian = || {
                calib
                    .and_then(|c| c.get(l, kind))
                    .ok_or_else(|| Error::Data(format!("no calibration statistics for {name}")))
            };
            let sparsity = spec.sparsity.unwrap_or(0.0);
            let bits = spec.bits.unwrap_or(8);
            let cl = match spec.method {
                Method::None => Ok(CompressedLinear::uncompressed(w)),
                Method::MagnitudePrune => prune_magnitude(w, sparsity),
                Method::ObsPrune => prune_obs(w, hessian()?, sparsity, spec.block_size),
                Method::RtnQuant => quantize_rtn(w, bits, spec.group_size),
                Method::ObsQuant => {
                    quantize_obs(w, hessian()?, bits, spec.group_size, spec.block_size)
                }
                Method::Joint => joint_compress(
                    w,
                    hessian()?,
                    sparsity,
                    bits,
                    spec.group_size,
                    spec.block_size,
                ),
            }
            .map_err(|e| match e {
                Error::Numeric { reason, .. } => Error::Numeric { layer: name.clone(), reason },
                other => other,
            })?;
            set.push(cl);
        }
        linears.push(set.try_into().expect("six projections"));
    }
    CompressedModel::from_parts(weights.clone(), linears, spec.clone())
}
