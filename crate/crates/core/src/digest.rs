//! SHA-256 content digests used for fingerprints and checkpoint integrity.

use sha2::{Digest, Sha256};

use crate::kernel::Tensor;

/// Hex digest over names, shapes and little-endian values, in iteration order.
pub fn tensor_digest<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> String {
    let mut h = Sha256::new();
    for (name, t) in tensors {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn bytes_digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(bytes_digest(bytes))
}
