use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::TokenId;

/// Tokenizer kind plus whatever state it needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum TokenizerSpec {
    /// One token per byte, v = 256.
    #[default]
    Byte,
    /// Byte-level BPE: ids 0..256 are raw bytes, id 256+i is `merges[i]`.
    Bpe { merges: Vec<(TokenId, TokenId)> },
}


impl TokenizerSpec {
    pub fn vocab_size(&self) -> usize {
        match self {
            TokenizerSpec::Byte => 256,
            TokenizerSpec::Bpe { merges } => 256 + merges.len(),
        }
    }

    /// Short content digest naming this tokenizer.
    pub fn id(&self) -> String {
        match self {
            TokenizerSpec::Byte => "byte".to_string(),
            TokenizerSpec::Bpe { merges } => {
                let mut h = Sha256::new();
                for (a, b) in merges {
                    h.update(a.to_le_bytes());
                    h.update(b.to_le_bytes());
                }
                format!("bpe-{}", &hex::encode(h.finalize())[..16])
            }
        }
    }

    pub fn tokenize(&self, text: &[u8]) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = text.iter().map(|&b| b as TokenId).collect();
        if let TokenizerSpec::Bpe { merges } = self {
            let ranks: BTreeMap<(TokenId, TokenId), usize> =
                merges.iter().enumerate().map(|(r, &p)| (p, r)).collect();
            loop {
                let best = ids
                    .windows(2)
                    .filter_map(|w| ranks.get(&(w[0], w[1])).copied())
                    .min();
                let Some(rank) = best else { break };
                let pair = merges[rank];
                ids = merge_pair(&ids, pair, 256 + rank as TokenId);
            }
        }
        ids
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        let v = self.vocab_size() as TokenId;
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            if id >= v {
                return Err(Error::Data(format!("token id {id} outside vocabulary of {v}")));
            }
            self.expand(id, &mut out);
        }
        Ok(out)
    }

    fn expand(&self, id: TokenId, out: &mut Vec<u8>) {
        match self {
            TokenizerSpec::Bpe { merges } if id >= 256 => {
                let (a, b) = merges[(id - 256) as usize];
                self.expand(a, out);
                self.expand(b, out);
            }
            _ => out.push(id as u8),
        }
    }

    /// Learns `target_vocab - 256` merges from `text`, most frequent pair first
    /// (ties to the smallest pair). Stops early when no pair repeats.
    pub fn train_bpe(text: &[u8], target_vocab: usize) -> Result<TokenizerSpec> {
        if target_vocab < 256 {
            return Err(Error::Config("BPE vocabulary must be at least 256".into()));
        }
        let mut ids: Vec<TokenId> = text.iter().map(|&b| b as TokenId).collect();
        let mut merges = Vec::new();
        while 256 + merges.len() < target_vocab {
            let mut counts: BTreeMap<(TokenId, TokenId), usize> = BTreeMap::new();
            for w in ids.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += 1;
            }
            let Some((&pair, &count)) =
                counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            else {
                break;
            };
            if count < 2 {
                break;
            }
            let new_id = 256 + merges.len() as TokenId;
            ids = merge_pair(&ids, pair, new_id);
            merges.push(pair);
        }
        Ok(TokenizerSpec::Bpe { merges })
    }
}

fn merge_pair(ids: &[TokenId], pair: (TokenId, TokenId), new_id: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && (ids[i], ids[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_identity() {
        let t = TokenizerSpec::Byte;
        assert_eq!(t.tokenize(b"ab"), vec![97, 98]);
        assert_eq!(t.detokenize(&[97, 98]).unwrap(), b"ab");
        assert!(t.tokenize(b"").is_empty());
        assert!(t.detokenize(&[]).unwrap().is_empty());
    }

    #[test]
    fn detokenize_rejects_unknown_id() {
        assert!(matches!(TokenizerSpec::Byte.detokenize(&[256]), Err(Error::Data(_))));
    }

    #[test]
    fn bpe_learns_frequent_pair_first() {
        let bpe = TokenizerSpec::train_bpe(b"abababab cd", 257).unwrap();
        let TokenizerSpec::Bpe { merges } = &bpe else { unreachable!() };
        assert_eq!(merges, &vec![(b'a' as u32, b'b' as u32)]);
        assert_eq!(bpe.tokenize(b"abx"), vec![256, b'x' as u32]);
        assert_eq!(bpe.vocab_size(), 257);
        assert!(bpe.id().starts_with("bpe-"));
    }
}
