//! Bit packing: `bits`-wide codes, least-significant bit first within each
//! byte, every row padded to a byte boundary.

pub fn row_bytes(cols: usize, bits: u8) -> usize {
    (cols * bits as usize).div_ceil(8)
}

pub fn pack_codes(codes: &[u8], rows: usize, cols: usize, bits: u8) -> Vec<u8> {
    assert_eq!(codes.len(), rows * cols, "code count");
    let rb = row_bytes(cols, bits);
    let mut out = vec![0u8; rows * rb];
    for r in 0..rows {
        let row = &mut out[r * rb..(r + 1) * rb];
        for c in 0..cols {
            let code = codes[r * cols + c];
            debug_assert!((code as u32) < (1u32 << bits));
            let start = c * bits as usize;
            for b in 0..bits as usize {
                if code >> b & 1 == 1 {
                    let pos = start + b;
                    row[pos / 8] |= 1 << (pos % 8);
                }
            }
        }
    }
    out
}

pub fn unpack_code(packed: &[u8], cols: usize, bits: u8, r: usize, c: usize) -> u8 {
    let row = &packed[r * row_bytes(cols, bits)..];
    let start = c * bits as usize;
    let mut code = 0u8;
    for b in 0..bits as usize {
        let pos = start + b;
        code |= (row[pos / 8] >> (pos % 8) & 1) << b;
    }
    code
}

pub fn unpack_codes(packed: &[u8], rows: usize, cols: usize, bits: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(unpack_code(packed, cols, bits, r, c));
        }
    }
    out
}

/// Keep-mask: bit set means the weight survives pruning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    rows: usize,
    cols: usize,
    bytes: Vec<u8>,
}

impl BitMask {
    pub fn from_keep(keep: &[bool], rows: usize, cols: usize) -> BitMask {
        let codes: Vec<u8> = keep.iter().map(|&k| k as u8).collect();
        BitMask { rows, cols, bytes: pack_codes(&codes, rows, cols, 1) }
    }

    pub fn from_bytes(bytes: Vec<u8>, rows: usize, cols: usize) -> Option<BitMask> {
        (bytes.len() == rows * row_bytes(cols, 1)).then_some(BitMask { rows, cols, bytes })
    }

    pub fn kept(&self, r: usize, c: usize) -> bool {
        unpack_code(&self.bytes, self.cols, 1, r, c) == 1
    }

    pub fn to_keep(&self) -> Vec<bool> {
        unpack_codes(&self.bytes, self.rows, self.cols, 1).into_iter().map(|b| b == 1).collect()
    }

    pub fn pruned_count(&self) -> usize {
        self.rows * self.cols - self.to_keep().iter().filter(|&&k| k).count()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}
