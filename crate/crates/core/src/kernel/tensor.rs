use crate::error::{Error, Result};

/// Dense row-major f32 tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Tensor> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Tensor { shape: vec![rows.len(), cols], data: rows.concat() })
    }

    pub fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a 2-D tensor (1 for a vector).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor { shape: vec![c, r], data: out }
    }

    /// `self · other` for 2-D operands.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, p) = self.dims2()?;
        let (p2, n) = other.dims2()?;
        if p != p2 {
            return Err(Error::Shape(format!("matmul inner dims {p} vs {p2}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, p, n, &self.data, p as isize, 1, &other.data, n as isize, 1, &mut out, false);
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    /// `self · otherᵀ`; `other` is stored `[n × p]`.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        let (m, p) = self.dims2()?;
        let (n, p2) = other.dims2()?;
        if p != p2 {
            return Err(Error::Shape(format!("matmul_t inner dims {p} vs {p2}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, p, n, &self.data, p as isize, 1, &other.data, 1, p as isize, &mut out, false);
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("add {:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, s: f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }

    /// Little-endian byte image of the values, used for digests and checkpoints.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub(crate) fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.len() {
            2 => Ok((self.shape[0], self.shape[1])),
            1 => Ok((1, self.shape[0])),
            _ => Err(Error::Shape(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }
}

/// `c (+)= a · b` with arbitrary strides on the operands; `c` is row-major `m × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    c: &mut [f32],
    accumulate: bool,
) {
    gemm_strided(m, k, n, a, rsa, csa, b, rsb, csb, c, n as isize, 1, accumulate);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    c: &mut [f32],
    rsc: isize,
    csc: isize,
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
        }
    };
    assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
    assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
    assert!(c.len() >= span(m, n, rsc, csc), "gemm: output too short");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Row-wise softmax with max subtraction.
pub fn row_softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data.chunks_mut(cols.max(1)) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Per-row layer normalization followed by the affine `gain`/`bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f32) -> Result<Tensor> {
    if eps <= 0.0 {
        return Err(Error::Contract("layer_norm eps must be positive".into()));
    }
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(Error::Shape(format!("layer_norm gain/bias must have {d} entries")));
    }
    let (out, _, _) = layer_norm_saved(x, gain, bias, eps);
    Ok(out)
}

pub(crate) fn layer_norm_saved(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f32,
) -> (Tensor, Vec<f32>, Vec<f32>) {
    let d = x.cols();
    let rows = x.rows();
    let mut out = vec![0.0; x.numel()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x.data[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let rstd = 1.0 / (var + eps).sqrt();
        let o = &mut out[r * d..(r + 1) * d];
        for j in 0..d {
            o[j] = (row[j] - mean) * rstd * gain.data[j] + bias.data[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (Tensor { shape: x.shape.clone(), data: out }, means, rstds)
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)

pub(crate) fn gelu_scalar(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad_scalar(x: f32) -> f32 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Tanh-approximated GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| gelu_scalar(v)).collect() }
}

/// Mean next-token negative log-likelihood in nats: row `t` of `logits` scores `targets[t]`.
pub fn nll_next_token(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let (n, v) = logits.dims2()?;
    if targets.len() != n {
        return Err(Error::Shape(format!("{n} logit rows but {} targets", targets.len())));
    }
    if n == 0 {
        return Err(Error::Contract("no positions to score".into()));
    }
    let mut total = 0.0f64;
    for (t, &target) in targets.iter().enumerate() {
        if target >= v {
            return Err(Error::Index(format!("target {target} outside vocabulary of {v}")));
        }
        total += row_nll(logits.row(t), target);
    }
    Ok(total / n as f64)
}

/// `-log softmax(row)[target]`, via log-sum-exp in f64.
pub(crate) fn row_nll(row: &[f32], target: usize) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    max + sum.ln() - row[target] as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_hand_values() {
        let b = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        assert_eq!(a.matmul(&c).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&Tensor::zeros(&[2, 2])), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_t_matches_explicit_transpose() {
        let a = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(vec![4, 3], (0..12).map(|i| i as f32 * 0.25).collect()).unwrap();
        assert_eq!(a.matmul_t(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
    }

    #[test]
    fn softmax_symmetric_and_shift_invariant() {
        let x = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(row_softmax(&x).data(), &[0.5, 0.5]);
        let y = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let shifted = Tensor::new(vec![1, 3], vec![101.0, 102.0, 103.0]).unwrap();
        assert!(row_softmax(&y).max_abs_diff(&row_softmax(&shifted)) < 1e-7);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let x = Tensor::new(vec![1, 3], vec![1e30, -1e30, 0.0]).unwrap();
        let s = row_softmax(&x);
        assert!(s.is_finite());
        assert_eq!(s.data()[0], 1.0);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::full(&[1, 4], 3.5);
        let out = layer_norm(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), LAYER_NORM_EPS)
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_fixed_point() {
        let x = Tensor::new(vec![1, 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let out = layer_norm(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), LAYER_NORM_EPS)
            .unwrap();
        assert!(out.max_abs_diff(&x) < 1e-4);
    }

    #[test]
    fn layer_norm_rejects_bad_eps() {
        let x = Tensor::zeros(&[1, 2]);
        let r = layer_norm(&x, &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), 0.0);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn nll_uniform_and_peaked() {
        let uniform = Tensor::zeros(&[3, 8]);
        let nll = nll_next_token(&uniform, &[0, 3, 7]).unwrap();
        assert!((nll - 8f64.ln()).abs() < 1e-12);
        let mut peaked = Tensor::zeros(&[1, 8]);
        peaked.set(0, 5, 30.0);
        assert!(nll_next_token(&peaked, &[5]).unwrap() < 1e-9);
    }

    #[test]
    fn nll_rejects_out_of_range_target() {
        let logits = Tensor::zeros(&[1, 4]);
        assert!(matches!(nll_next_token(&logits, &[4]), Err(Error::Index(_))));
    }

    #[test]
    fn gelu_grad_matches_difference_quotient() {
        for &x in &[-3.0f32, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-3;
            let fd = (gelu_scalar(x + h) as f64 - gelu_scalar(x - h) as f64) / (2.0 * h as f64);
            assert!((fd - gelu_grad_scalar(x) as f64).abs() < 1e-3, "x={x}");
        }
    }
}
