use super::calib::Hessian;
use super::linalg::inverse_upper_cholesky;
use super::linear::CompressedLinear;
use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// `⌈sparsity · n⌉`, guarded against float noise such as `0.1 · 30`.
pub fn prune_count(sparsity: f64, n: usize) -> usize {
    ((sparsity * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Zeroes the globally smallest-magnitude entries; ties go to the lower (row, col).
pub fn prune_magnitude(w: &Tensor, sparsity: f64) -> Result<CompressedLinear> {
    check_sparsity(sparsity)?;
    let (rows, cols) = w.dims2()?;
    let n = prune_count(sparsity, rows * cols);
    let mut order: Vec<usize> = (0..rows * cols).collect();
    let data = w.data();
    order.sort_by(|&a, &b| data[a].abs().total_cmp(&data[b].abs()).then(a.cmp(&b)));
    let mut keep = vec![true; rows * cols];
    for &i in &order[..n] {
        keep[i] = false;
    }
    let values = data.iter().zip(&keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect();
    Ok(CompressedLinear::pruned(values, &keep, rows, cols))
}

/// Prune quota for every (row, column-block) cell, row-major. Quotas follow
/// the cumulative ceiling so they sum to exactly `⌈sparsity · rows · cols⌉`.
pub fn block_quotas(rows: usize, cols: usize, block_size: usize, sparsity: f64) -> Vec<usize> {
    let bs = block_size.max(1);
    let mut out = Vec::with_capacity(rows * cols.div_ceil(bs));
    let (mut seen, mut taken) = (0usize, 0usize);
    for _ in 0..rows {
        for start in (0..cols).step_by(bs) {
            seen += (start + bs).min(cols) - start;
            let target = prune_count(sparsity, seen);
            out.push(target - taken);
            taken = target;
        }
    }
    out
}

pub(crate) fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::Config(format!("sparsity {sparsity} outside [0, 1)")));
    }
    Ok(())
}

pub(crate) fn factor(h: &Hessian, cols: usize) -> Result<Vec<f32>> {
    if h.dim != cols {
        return Err(Error::Shape(format!("Hessian dim {} vs weight columns {cols}", h.dim)));
    }
    inverse_upper_cholesky(&h.data, cols)
        .map_err(|reason| Error::Numeric { layer: String::new(), reason })
}

/// Applies the compensation for fixing `row[j]` to `q`: every later column
/// moves by `−((w_j − q) / U_jj) · U_{j,·}`.
#[inline]
pub(crate) fn compensate(row: &mut [f32], u: &[f32], j: usize, q: f32) {
    let n = row.len();
    let urow = &u[j * n..(j + 1) * n];
    let err = (row[j] - q) / urow[j];
    row[j] = q;
    if err != 0.0 {
        for (w, &uj) in row[j + 1..].iter_mut().zip(&urow[j + 1..]) {
            *w -= err * uj;
        }
    }
}

/// Second-order pruning. Columns go left to right in blocks; at each block
/// start every row drops its quota of lowest-saliency `w²/U_jj²` entries
/// (ties to the lower column), and each dropped weight's error is pushed
/// onto the columns to its right.
pub fn prune_obs(w: &Tensor, h: &Hessian, sparsity: f64, block_size: usize) -> Result<CompressedLinear> {
    check_sparsity(sparsity)?;
    let (rows, cols) = w.dims2()?;
    let u = factor(h, cols)?;
    let (values, keep) = prune_obs_raw(w.data(), rows, cols, &u, sparsity, block_size);
    Ok(CompressedLinear::pruned(values, &keep, rows, cols))
}

pub(crate) fn prune_obs_raw(
    w: &[f32],
    rows: usize,
    cols: usize,
    u: &[f32],
    sparsity: f64,
    block_size: usize,
) -> (Vec<f32>, Vec<bool>) {
    let bs = block_size.max(1);
    let quotas = block_quotas(rows, cols, bs, sparsity);
    let n_blocks = cols.div_ceil(bs);
    let mut values = w.to_vec();
    let mut keep = vec![true; rows * cols];
    for r in 0..rows {
        let row = &mut values[r * cols..(r + 1) * cols];
        let krow = &mut keep[r * cols..(r + 1) * cols];
        for b in 0..n_blocks {
            let block = b * bs..((b + 1) * bs).min(cols);
            let quota = quotas[r * n_blocks + b];
            let mut order: Vec<usize> = block.clone().collect();
            let sal = |j: usize| {
                let d = u[j * cols + j];
                row[j] * row[j] / (d * d)
            };
            order.sort_by(|&a, &c| sal(a).total_cmp(&sal(c)).then(a.cmp(&c)));
            for &j in &order[..quota] {
                krow[j] = false;
            }
            for j in block {
                if !krow[j] {
                    compensate(row, u, j, 0.0);
                }
            }
        }
    }
    (values, keep)
}
