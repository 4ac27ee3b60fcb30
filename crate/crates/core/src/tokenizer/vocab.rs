use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The special tokens every vocabulary carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Special {
    Pad,
    Bos,
    Eos,
    Mask,
    Unk,
    Translation,
}

impl Special {
    pub const ALL: [Special; 6] = [
        Special::Pad,
        Special::Bos,
        Special::Eos,
        Special::Mask,
        Special::Unk,
        Special::Translation,
    ];

    pub fn literal(self) -> &'static str {
        match self {
            Special::Pad => "<|pad|>",
            Special::Bos => "<|bos|>",
            Special::Eos => "<|eos|>",
            Special::Mask => "<|mask|>",
            Special::Unk => "<|unk|>",
            Special::Translation => "<|translation|>",
        }
    }

    pub fn from_literal(s: &str) -> Option<Self> {
        Special::ALL.into_iter().find(|sp| sp.literal() == s)
    }
}

/// Byte-level BPE vocabulary.
///
/// Layout: ids `0..256` are the single bytes, followed by the special tokens,
/// followed by one token per merge in training order.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    specials: BTreeMap<Special, u32>,
    token_index: HashMap<Vec<u8>, u32>,
    merge_rank: HashMap<(u32, u32), u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    merges: Vec<[u32; 2]>,
    specials: BTreeMap<String, u32>,
}

impl Vocab {
    /// Build and validate a vocabulary from its parts.
    pub fn from_parts(
        tokens: Vec<Vec<u8>>,
        merges: Vec<(u32, u32)>,
        specials: BTreeMap<Special, u32>,
    ) -> Result<Self> {
        let mut token_index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if token_index.insert(t.clone(), id as u32).is_some() {
                return Err(Error::Format(format!("duplicate token bytes at id {id}")));
            }
        }
        for sp in Special::ALL {
            let Some(&id) = specials.get(&sp) else {
                return Err(Error::Format(format!("missing special {}", sp.literal())));
            };
            if tokens.get(id as usize).map(Vec::as_slice) != Some(sp.literal().as_bytes()) {
                return Err(Error::Format(format!(
                    "special {} does not map to its literal",
                    sp.literal()
                )));
            }
        }
        if merges.len() > tokens.len() {
            return Err(Error::Format("more merges than tokens".into()));
        }
        let first = tokens.len() - merges.len();
        let mut merge_rank = HashMap::with_capacity(merges.len());
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let out = first + rank;
            let (Some(ta), Some(tb)) = (tokens.get(a as usize), tokens.get(b as usize)) else {
                return Err(Error::Format(format!("merge {rank} references unknown id")));
            };
            if a as usize >= out || b as usize >= out {
                return Err(Error::Format(format!("merge {rank} references a later token")));
            }
            let mut joined = ta.clone();
            joined.extend_from_slice(tb);
            if tokens[out] != joined {
                return Err(Error::Format(format!(
                    "merge {rank} output does not equal the concatenation of its pair"
                )));
            }
            merge_rank.insert((a, b), rank as u32);
        }
        Ok(Vocab {
            tokens,
            merges,
            specials,
            token_index,
            merge_rank,
        })
    }

    /// The 256 byte tokens plus specials, with no merges.
    pub fn byte_level() -> Self {
        let (tokens, specials) = base_tokens();
        Vocab::from_parts(tokens, Vec::new(), specials).expect("base vocab is valid")
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn id_of(&self, bytes: &[u8]) -> Option<u32> {
        self.token_index.get(bytes).copied()
    }

    pub fn special(&self, sp: Special) -> u32 {
        self.specials[&sp]
    }

    pub fn specials(&self) -> &BTreeMap<Special, u32> {
        &self.specials
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.specials.values().any(|&s| s == id)
    }

    /// Non-special ids, in increasing order.
    pub fn regular_ids(&self) -> Vec<u32> {
        (0..self.size() as u32).filter(|&i| !self.is_special(i)).collect()
    }

    pub(crate) fn merge_rank(&self, pair: (u32, u32)) -> Option<u32> {
        self.merge_rank.get(&pair).copied()
    }

    pub(crate) fn merge_output(&self, rank: u32) -> u32 {
        (self.tokens.len() - self.merges.len()) as u32 + rank
    }

    pub fn to_json(&self) -> Result<String> {
        let file = VocabFile {
            tokens: self.tokens.iter().map(|t| B64.encode(t)).collect(),
            merges: self.merges.iter().map(|&(a, b)| [a, b]).collect(),
            specials: self
                .specials
                .iter()
                .map(|(sp, &id)| (sp.literal().to_string(), id))
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(json)?;
        let tokens = file
            .tokens
            .iter()
            .map(|t| {
                B64.decode(t)
                    .map_err(|e| Error::Format(format!("token is not base64: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut specials = BTreeMap::new();
        for (lit, id) in file.specials {
            let sp = Special::from_literal(&lit)
                .ok_or_else(|| Error::Format(format!("unknown special {lit}")))?;
            specials.insert(sp, id);
        }
        let merges = file.merges.into_iter().map(|[a, b]| (a, b)).collect();
        Vocab::from_parts(tokens, merges, specials)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Vocab::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn base_tokens() -> (Vec<Vec<u8>>, BTreeMap<Special, u32>) {
    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut specials = BTreeMap::new();
    for sp in Special::ALL {
        specials.insert(sp, tokens.len() as u32);
        tokens.push(sp.literal().as_bytes().to_vec());
    }
    (tokens, specials)
}

/// Fraction of `b`'s tokens whose exact byte string also appears in `a`.
pub fn vocab_overlap(a: &Vocab, b: &Vocab) -> f64 {
    let shared = b.tokens.iter().filter(|t| a.id_of(t).is_some()).count();
    shared as f64 / b.size() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_extra(extra: &[&str]) -> Vocab {
        // extra single tokens built from byte merges of length 2
        let (mut tokens, specials) = base_tokens();
        let mut merges = Vec::new();
        for e in extra {
            let b = e.as_bytes();
            assert_eq!(b.len(), 2);
            merges.push((b[0] as u32, b[1] as u32));
            tokens.push(b.to_vec());
        }
        Vocab::from_parts(tokens, merges, specials).unwrap()
    }

    #[test]
    fn overlap_of_identical_vocab_is_one() {
        let v = with_extra(&["ab", "cd"]);
        assert_eq!(vocab_overlap(&v, &v), 1.0);
    }

    #[test]
    fn overlap_counts_base_specials_and_shared_merges() {
        let a = with_extra(&["xx", "yy", "zz", "ww"]);
        let b = with_extra(&["xx", "yy", "qq", "rr"]);
        assert_eq!(vocab_overlap(&a, &b), (256.0 + 6.0 + 2.0) / (256.0 + 6.0 + 4.0));
    }

    #[test]
    fn json_roundtrip_preserves_everything() {
        let v = with_extra(&["ab", "é"]);
        let back = Vocab::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.merges(), v.merges());
        assert_eq!(back.specials(), v.specials());
    }

    #[test]
    fn rejects_missing_special_and_bad_merge() {
        let (tokens, mut specials) = base_tokens();
        specials.remove(&Special::Mask);
        assert!(Vocab::from_parts(tokens.clone(), vec![], specials).is_err());

        let (mut tokens, specials) = base_tokens();
        tokens.push(b"ab".to_vec());
        assert!(Vocab::from_parts(tokens, vec![(b'a' as u32, b'c' as u32)], specials).is_err());
    }
}
