use super::calib::Hessian;
use super::grid::{groups, n_groups, Grid};
use super::linear::CompressedLinear;
use super::prune::{check_sparsity, compensate, factor, prune_obs_raw};
use crate::error::{Error, Result};
use crate::kernel::Tensor;

fn check_bits(bits: u8) -> Result<()> {
    if !(2..=8).contains(&bits) {
        return Err(Error::Config(format!("bits must be in [2, 8], got {bits}")));
    }
    Ok(())
}

/// Round-to-nearest on a per-row, per-group min–max grid.
pub fn quantize_rtn(w: &Tensor, bits: u8, group_size: usize) -> Result<CompressedLinear> {
    check_bits(bits)?;
    let (rows, cols) = w.dims2()?;
    let mut codes = Vec::with_capacity(rows * cols);
    let mut grids = Vec::with_capacity(rows * n_groups(cols, group_size));
    for r in 0..rows {
        let row = w.row(r);
        for g in groups(cols, group_size) {
            let grid = Grid::fit(&row[g.clone()], bits);
            codes.extend(row[g].iter().map(|&v| grid.code(v)));
            grids.push(grid);
        }
    }
    Ok(CompressedLinear::quantized(rows, cols, &codes, &grids, group_size.max(1), None))
}

/// Second-order quantization: columns fixed left to right, each rounding
/// error compensated on the columns to its right. A group's grid is fitted
/// when its first column comes up, from the already-compensated values.
/// Updates are applied eagerly, so `block_size` does not change the result.
pub fn quantize_obs(
    w: &Tensor,
    h: &Hessian,
    bits: u8,
    group_size: usize,
    block_size: usize,
) -> Result<CompressedLinear> {
    Ok(quantize_obs_traced(w, h, bits, group_size, block_size)?.0)
}

/// [`quantize_obs`] that also returns each entry's value at the moment it
/// was rounded (row-major), for checking that every code is nearest to its input.
pub fn quantize_obs_traced(
    w: &Tensor,
    h: &Hessian,
    bits: u8,
    group_size: usize,
    _block_size: usize,
) -> Result<(CompressedLinear, Vec<f32>)> {
    check_bits(bits)?;
    let (rows, cols) = w.dims2()?;
    let u = factor(h, cols)?;
    let (codes, grids, inputs) = obs_quant_raw(w.data(), rows, cols, &u, bits, group_size, None);
    let cl = CompressedLinear::quantized(rows, cols, &codes, &grids, group_size.max(1), None);
    Ok((cl, inputs))
}

/// Core column sweep. With a keep mask, dropped entries are forced to
/// exact zero (their group's zero-point code) and excluded from grid fitting.
fn obs_quant_raw(
    w: &[f32],
    rows: usize,
    cols: usize,
    u: &[f32],
    bits: u8,
    group_size: usize,
    keep: Option<&[bool]>,
) -> (Vec<u8>, Vec<Grid>, Vec<f32>) {
    let gs = group_size.max(1);
    let mut values = w.to_vec();
    let mut codes = vec![0u8; rows * cols];
    let mut inputs = vec![0f32; rows * cols];
    let mut grids = Vec::with_capacity(rows * n_groups(cols, gs));
    for r in 0..rows {
        let row = &mut values[r * cols..(r + 1) * cols];
        let krow = keep.map(|k| &k[r * cols..(r + 1) * cols]);
        let kept = |j: usize| krow.is_none_or(|k| k[j]);
        for g in groups(cols, gs) {
            let fit_vals: Vec<f32> = g.clone().filter(|&j| kept(j)).map(|j| row[j]).collect();
            let grid = Grid::fit(&fit_vals, bits);
            grids.push(grid);
            for j in g {
                inputs[r * cols + j] = row[j];
                let (code, q) = if kept(j) {
                    let c = grid.code(row[j]);
                    (c, grid.dequant(c))
                } else {
                    (grid.zero, 0.0)
                };
                codes[r * cols + j] = code;
                compensate(row, u, j, q);
            }
        }
    }
    (codes, grids, inputs)
}

/// Second-order pruning followed by second-order quantization of the
/// survivors on the same Hessian. With nothing pruned the result is plain
/// [`quantize_obs`] output (no mask stored).
pub fn joint_compress(
    w: &Tensor,
    h: &Hessian,
    sparsity: f64,
    bits: u8,
    group_size: usize,
    block_size: usize,
) -> Result<CompressedLinear> {
    check_sparsity(sparsity)?;
    check_bits(bits)?;
    let (rows, cols) = w.dims2()?;
    let u = factor(h, cols)?;
    let (pruned, keep) = prune_obs_raw(w.data(), rows, cols, &u, sparsity, block_size);
    let any_pruned = keep.iter().any(|&k| !k);
    let mask = any_pruned.then_some(keep.as_slice());
    let (codes, grids, _) = obs_quant_raw(&pruned, rows, cols, &u, bits, group_size, mask);
    Ok(CompressedLinear::quantized(rows, cols, &codes, &grids, group_size.max(1), mask))
}
