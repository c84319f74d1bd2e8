//! Asymmetric per-group min–max quantization grid.

/// Grid `scale · (code − zero)` for `code ∈ [0, 2^bits)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub scale: f32,
    pub zero: u8,
    pub bits: u8,
}

impl Grid {
    pub fn max_code(bits: u8) -> u32 {
        (1u32 << bits) - 1
    }

    /// Fits the grid to `values`. The range is widened to contain 0 so the
    /// zero point is always a valid code and 0 is exactly representable; an
    /// all-zero group is degenerate and gets scale 1, zero 0.
    pub fn fit(values: &[f32], bits: u8) -> Grid {
        let maxq = Self::max_code(bits) as f32;
        let (mut lo, mut hi) = (0.0f32, 0.0f32);
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            return Grid { scale: 1.0, zero: 0, bits };
        }
        let scale = (hi - lo) / maxq;
        let zero = (-lo / scale).round().clamp(0.0, maxq) as u8;
        Grid { scale, zero, bits }
    }

    /// Nearest code, rounding half away from zero.
    pub fn code(&self, w: f32) -> u8 {
        let maxq = Self::max_code(self.bits) as f32;
        ((w / self.scale).round() + self.zero as f32).clamp(0.0, maxq) as u8
    }

    pub fn dequant(&self, code: u8) -> f32 {
        self.scale * (code as f32 - self.zero as f32)
    }

    pub fn snap(&self, w: f32) -> f32 {
        self.dequant(self.code(w))
    }
}

/// Column ranges of the quantization groups in a row of `cols` entries.
pub fn groups(cols: usize, group_size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    let gs = group_size.max(1);
    (0..cols).step_by(gs).map(move |s| s..(s + gs).min(cols))
}

pub fn n_groups(cols: usize, group_size: usize) -> usize {
    cols.div_ceil(group_size.max(1))
}
