use sha2::{Digest, Sha256};

use super::grid::{n_groups, Grid};
use super::packed::{pack_codes, unpack_code, unpack_codes, BitMask};
use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// Packed integer codes with per-group scales and zero points, row-major
/// over `rows × n_groups`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantPayload {
    pub bits: u8,
    pub group_size: usize,
    pub codes: Vec<u8>,
    pub scales: Vec<f32>,
    pub zeros: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Dense(Vec<f32>),
    Quantized(QuantPayload),
}

/// One compressed projection. Dense + mask (pruned), packed codes (quantized),
/// or packed codes + mask (joint). Dense without a mask is the uncompressed case.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedLinear {
    rows: usize,
    cols: usize,
    mask: Option<BitMask>,
    payload: Payload,
}

impl CompressedLinear {
    pub fn uncompressed(w: &Tensor) -> CompressedLinear {
        CompressedLinear {
            rows: w.rows(),
            cols: w.cols(),
            mask: None,
            payload: Payload::Dense(w.data().to_vec()),
        }
    }

    /// `values` must already be zero wherever `keep` is false.
    pub fn pruned(values: Vec<f32>, keep: &[bool], rows: usize, cols: usize) -> CompressedLinear {
        debug_assert!(values.iter().zip(keep).all(|(&v, &k)| k || v == 0.0));
        CompressedLinear {
            rows,
            cols,
            mask: Some(BitMask::from_keep(keep, rows, cols)),
            payload: Payload::Dense(values),
        }
    }

    /// `codes` unpacked row-major; `grids` row-major over groups.
    pub fn quantized(
        rows: usize,
        cols: usize,
        codes: &[u8],
        grids: &[Grid],
        group_size: usize,
        keep: Option<&[bool]>,
    ) -> CompressedLinear {
        let bits = grids.first().map_or(8, |g| g.bits);
        assert_eq!(grids.len(), rows * n_groups(cols, group_size), "grid count");
        CompressedLinear {
            rows,
            cols,
            mask: keep.map(|k| BitMask::from_keep(k, rows, cols)),
            payload: Payload::Quantized(QuantPayload {
                bits,
                group_size,
                codes: pack_codes(codes, rows, cols, bits),
                scales: grids.iter().map(|g| g.scale).collect(),
                zeros: grids.iter().map(|g| g.zero).collect(),
            }),
        }
    }

    /// Reassembles from stored parts (checkpoint loading), validating sizes.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        mask: Option<BitMask>,
        payload: Payload,
    ) -> Result<CompressedLinear> {
        let ok = match &payload {
            Payload::Dense(v) => v.len() == rows * cols,
            Payload::Quantized(q) => {
                let ng = rows * n_groups(cols, q.group_size);
                q.codes.len() == rows * super::packed::row_bytes(cols, q.bits)
                    && q.scales.len() == ng
                    && q.zeros.len() == ng
            }
        };
        if !ok || mask.as_ref().is_some_and(|m| m.shape() != (rows, cols)) {
            return Err(Error::Shape("compressed linear parts disagree with its shape".into()));
        }
        Ok(CompressedLinear { rows, cols, mask, payload })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn mask(&self) -> Option<&BitMask> {
        self.mask.as_ref()
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn quant(&self) -> Option<&QuantPayload> {
        match &self.payload {
            Payload::Quantized(q) => Some(q),
            Payload::Dense(_) => None,
        }
    }

    /// Unpacked codes, row-major.
    pub fn codes(&self) -> Option<Vec<u8>> {
        self.quant().map(|q| unpack_codes(&q.codes, self.rows, self.cols, q.bits))
    }

    pub fn grid(&self, row: usize, group: usize) -> Option<Grid> {
        self.quant().map(|q| {
            let i = row * n_groups(self.cols, q.group_size) + group;
            Grid { scale: q.scales[i], zero: q.zeros[i], bits: q.bits }
        })
    }

    pub fn pruned_count(&self) -> usize {
        self.mask.as_ref().map_or(0, BitMask::pruned_count)
    }

    /// Dense f32 weights: dequantized codes with the mask applied.
    pub fn reconstruct(&self) -> Tensor {
        let (rows, cols) = (self.rows, self.cols);
        let mut out = match &self.payload {
            Payload::Dense(v) => v.clone(),
            Payload::Quantized(q) => {
                let ng = n_groups(cols, q.group_size);
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let i = r * ng + c / q.group_size;
                        let code = unpack_code(&q.codes, cols, q.bits, r, c);
                        out.push(q.scales[i] * (code as f32 - q.zeros[i] as f32));
                    }
                }
                out
            }
        };
        if let Some(mask) = &self.mask {
            for (v, keep) in out.iter_mut().zip(mask.to_keep()) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        Tensor::new(vec![rows, cols], out).expect("sized")
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        if let Some(m) = &self.mask {
            h.update(b"mask");
            h.update(m.bytes());
        }
        match &self.payload {
            Payload::Dense(v) => {
                h.update(b"dense");
                for x in v {
                    h.update(x.to_le_bytes());
                }
            }
            Payload::Quantized(q) => {
                h.update(b"quant");
                h.update([q.bits]);
                h.update((q.group_size as u64).to_le_bytes());
                h.update(&q.codes);
                for s in &q.scales {
                    h.update(s.to_le_bytes());
                }
                h.update(&q.zeros);
            }
        }
        hex::encode(h.finalize())
    }
}

/// `‖W·X − Ŵ·X‖_F` with `X` holding one input sample per column (`[in × N]`).
pub fn reconstruction_error(w: &Tensor, cl: &CompressedLinear, x: &Tensor) -> Result<f64> {
    let rec = cl.reconstruct();
    if rec.shape() != w.shape() {
        return Err(Error::Shape("weight and compressed shapes differ".into()));
    }
    let diff = Tensor::new(
        w.shape().to_vec(),
        w.data().iter().zip(rec.data()).map(|(a, b)| a - b).collect(),
    )?;
    let out = diff.matmul(x)?;
    Ok(out.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt())
}
