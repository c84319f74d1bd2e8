use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::container::{read_file, write_file, DType, Record};
use crate::compress::{BitMask, CompressedLinear, CompressedModel, CompressionSpec, Payload, QuantPayload};
use crate::error::{Corruption, Error, Result};
use crate::kernel::Tensor;
use crate::model::{LanguageModel, LinearKind, ModelConfig, ModelWeights};
use crate::prompt::{Provenance, SoftPrompt};

/// Anything the harness persists.
#[derive(Clone, Debug)]
pub enum Artifact {
    Model(ModelWeights),
    Compressed(CompressedModel),
    Prompt(SoftPrompt),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Model,
    CompressedModel,
    Prompt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearMeta {
    name: String,
    rows: usize,
    cols: usize,
    bits: Option<u8>,
    group_size: Option<usize>,
    masked: bool,
}

fn malformed() -> Error {
    Error::Corrupt(Corruption::Malformed)
}

fn from_meta<T: for<'de> Deserialize<'de>>(meta: &serde_json::Value, key: &str) -> Result<T> {
    serde_json::from_value(meta.get(key).cloned().ok_or_else(malformed)?).map_err(|_| malformed())
}

fn dense_records(w: &ModelWeights, skip_linears: bool) -> Vec<Record> {
    let linear_names: Vec<String> = (0..w.config.n_layers)
        .flat_map(|l| LinearKind::ALL.map(|k| k.name(l)))
        .collect();
    w.named_tensors()
        .into_iter()
        .filter(|(n, _)| !(skip_linears && linear_names.contains(n)))
        .map(|(n, t)| Record::f32(n, t))
        .collect()
}

pub fn save_checkpoint(artifact: &Artifact, path: &Path) -> Result<()> {
    let (meta, records) = match artifact {
        Artifact::Model(w) => (
            json!({
                "kind": ArtifactKind::Model,
                "config": w.config,
                "fingerprint": w.fingerprint(),
            }),
            dense_records(w, false),
        ),
        Artifact::Compressed(m) => {
            let mut records = dense_records(m.dense(), true);
            let mut linears = Vec::new();
            for (l, set) in m.linears().iter().enumerate() {
                for (kind, cl) in LinearKind::ALL.into_iter().zip(set) {
                    let name = kind.name(l);
                    let (rows, cols) = cl.shape();
                    let q = cl.quant();
                    match cl.payload() {
                        Payload::Dense(v) => records.push(Record::f32(
                            format!("{name}.weight"),
                            &Tensor::new(vec![rows, cols], v.clone())?,
                        )),
                        Payload::Quantized(q) => {
                            let ng = q.scales.len() / rows;
                            records.push(Record::bytes(
                                format!("{name}.codes"),
                                DType::PackedUint,
                                &[rows, cols],
                                q.codes.clone(),
                            ));
                            records.push(Record::f32(
                                format!("{name}.scales"),
                                &Tensor::new(vec![rows, ng], q.scales.clone())?,
                            ));
                            records.push(Record::bytes(
                                format!("{name}.zeros"),
                                DType::PackedUint,
                                &[rows, ng],
                                q.zeros.clone(),
                            ));
                        }
                    }
                    if let Some(mask) = cl.mask() {
                        records.push(Record::bytes(
                            format!("{name}.mask"),
                            DType::Bitmask,
                            &[rows, cols],
                            mask.bytes().to_vec(),
                        ));
                    }
                    linears.push(LinearMeta {
                        name,
                        rows,
                        cols,
                        bits: q.map(|q| q.bits),
                        group_size: q.map(|q| q.group_size),
                        masked: cl.mask().is_some(),
                    });
                }
            }
            let meta = json!({
                "kind": ArtifactKind::CompressedModel,
                "config": m.config(),
                "spec": m.spec(),
                "fingerprint": m.construction_fingerprint(),
                "linears": linears,
            });
            (meta, records)
        }
        Artifact::Prompt(p) => (
            json!({
                "kind": ArtifactKind::Prompt,
                "provenance": p.provenance(),
                "id": p.id(),
            }),
            vec![Record::f32("prompt.E", p.embeddings())],
        ),
    };
    write_file(path, &meta, &records)
}

pub fn load_checkpoint(path: &Path) -> Result<Artifact> {
    let (meta, records) = read_file(path)?;
    let kind: ArtifactKind = from_meta(&meta, "kind")?;
    let mut by_name: std::collections::BTreeMap<String, Record> =
        records.into_iter().map(|r| (r.name.clone(), r)).collect();
    let mut take = |name: &str| by_name.remove(name).ok_or_else(malformed);
    match kind {
        ArtifactKind::Model => {
            let config: ModelConfig = from_meta(&meta, "config")?;
            let names = crate::model::init_model(&config)?
                .named_tensors()
                .into_iter()
                .map(|(n, _)| n)
                .collect::<Vec<_>>();
            let tensors = names.iter().map(|n| take(n)?.to_tensor()).collect::<Result<Vec<_>>>()?;
            let w = ModelWeights::from_tensors(config, tensors).map_err(|_| malformed())?;
            let fp: String = from_meta(&meta, "fingerprint")?;
            if w.fingerprint() != fp {
                return Err(Error::Corrupt(Corruption::Malformed));
            }
            Ok(Artifact::Model(w))
        }
        ArtifactKind::CompressedModel => {
            let config: ModelConfig = from_meta(&meta, "config")?;
            let spec: CompressionSpec = from_meta(&meta, "spec")?;
            let linears_meta: Vec<LinearMeta> = from_meta(&meta, "linears")?;
            let template = crate::model::init_model(&config)?;
            let mut tensors = Vec::new();
            for (n, t) in template.named_tensors() {
                if n.contains(".attn.") || n.contains(".mlp.") {
                    tensors.push(Tensor::zeros(t.shape()));
                } else {
                    tensors.push(take(&n)?.to_tensor()?);
                }
            }
            let base = ModelWeights::from_tensors(config.clone(), tensors).map_err(|_| malformed())?;
            let mut linears = Vec::with_capacity(config.n_layers);
            let mut it = linears_meta.into_iter();
            for _ in 0..config.n_layers {
                let mut set = Vec::with_capacity(6);
                for _ in LinearKind::ALL {
                    let lm = it.next().ok_or_else(malformed)?;
                    let payload = match (lm.bits, lm.group_size) {
                        (Some(bits), Some(group_size)) => {
                            let codes = take(&format!("{}.codes", lm.name))?.payload;
                            let scales = take(&format!("{}.scales", lm.name))?.to_tensor()?.into_data();
                            let zeros = take(&format!("{}.zeros", lm.name))?.payload;
                            Payload::Quantized(QuantPayload { bits, group_size, codes, scales, zeros })
                        }
                        _ => Payload::Dense(take(&format!("{}.weight", lm.name))?.to_tensor()?.into_data()),
                    };
                    let mask = if lm.masked {
                        let r = take(&format!("{}.mask", lm.name))?;
                        Some(BitMask::from_bytes(r.payload, lm.rows, lm.cols).ok_or_else(malformed)?)
                    } else {
                        None
                    };
                    set.push(
                        CompressedLinear::from_parts(lm.rows, lm.cols, mask, payload)
                            .map_err(|_| malformed())?,
                    );
                }
                linears.push(set.try_into().expect("six projections"));
            }
            let m = CompressedModel::from_parts(base, linears, spec).map_err(|_| malformed())?;
            let fp: String = from_meta(&meta, "fingerprint")?;
            if m.construction_fingerprint() != fp {
                return Err(Error::Corrupt(Corruption::Malformed));
            }
            Ok(Artifact::Compressed(m))
        }
        ArtifactKind::Prompt => {
            let provenance: Provenance = from_meta(&meta, "provenance")?;
            let e = take("prompt.E")?.to_tensor()?;
            Ok(Artifact::Prompt(SoftPrompt::new(e, provenance).map_err(|_| malformed())?))
        }
    }
}

pub fn load_model(path: &Path) -> Result<ModelWeights> {
    match load_checkpoint(path)? {
        Artifact::Model(w) => Ok(w),
        _ => Err(Error::Config(format!("{} is not a model checkpoint", path.display()))),
    }
}

pub fn load_compressed(path: &Path) -> Result<CompressedModel> {
    match load_checkpoint(path)? {
        Artifact::Compressed(m) => Ok(m),
        _ => Err(Error::Config(format!("{} is not a compressed-model checkpoint", path.display()))),
    }
}

pub fn load_prompt(path: &Path) -> Result<SoftPrompt> {
    match load_checkpoint(path)? {
        Artifact::Prompt(p) => Ok(p),
        _ => Err(Error::Config(format!("{} is not a prompt checkpoint", path.display()))),
    }
}
