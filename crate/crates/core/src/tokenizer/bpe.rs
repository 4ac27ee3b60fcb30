//! Byte-level BPE training, encoding and decoding.
//!
//! Text is first split on special-token literals, then into whitespace-led
//! chunks (`"ab cd"` → `["ab", " cd"]`). Merges never cross chunk boundaries.
//! Pair selection is a global argmax over pair counts; ties go to the pair whose
//! `(left bytes, right bytes)` is lexicographically smallest.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{invalid, Result};

use super::vocab::{base_tokens, Special, Vocab};

/// Pairs seen fewer times than this are never merged.
pub const MIN_PAIR_COUNT: u64 = 2;

pub(crate) enum Piece<'a> {
    Text(&'a str),
    Special(Special),
}

pub(crate) fn split_specials(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut pos = 0;
    let bytes = text.as_bytes();
    while pos < bytes.len() {
        if bytes[pos] == b'<' {
            if let Some(sp) = Special::ALL
                .into_iter()
                .find(|sp| text[pos..].starts_with(sp.literal()))
            {
                if start < pos {
                    pieces.push(Piece::Text(&text[start..pos]));
                }
                pieces.push(Piece::Special(sp));
                pos += sp.literal().len();
                start = pos;
                continue;
            }
        }
        pos += 1;
    }
    if start < bytes.len() {
        pieces.push(Piece::Text(&text[start..]));
    }
    pieces
}

/// Whitespace-led chunks: a new chunk starts at each whitespace run that
/// follows non-whitespace.
pub(crate) fn chunks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws = true;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if ws && !prev_ws && i > start {
            out.push(&text[start..i]);
            start = i;
        }
        prev_ws = ws;
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Count the chunks of a corpus, skipping special-token literals.
pub(crate) fn chunk_counts<S: AsRef<str>>(corpus: &[S]) -> Vec<(Vec<u8>, u64)> {
    let mut counts: HashMap<&[u8], u64> = HashMap::new();
    let mut order: Vec<&[u8]> = Vec::new();
    for doc in corpus {
        for piece in split_specials(doc.as_ref()) {
            if let Piece::Text(t) = piece {
                for c in chunks(t) {
                    let e = counts.entry(c.as_bytes()).or_insert_with(|| {
                        order.push(c.as_bytes());
                        0
                    });
                    *e += 1;
                }
            }
        }
    }
    order
        .into_iter()
        .map(|c| (c.to_vec(), counts[c]))
        .collect()
}

type PairKey = (Reverse<u64>, Vec<u8>, Vec<u8>, u32, u32);

struct Trainer {
    tokens: Vec<Vec<u8>>,
    token_set: HashMap<Vec<u8>, u32>,
    words: Vec<Vec<u32>>,
    word_counts: Vec<u64>,
    pair_counts: HashMap<(u32, u32), u64>,
    pair_words: HashMap<(u32, u32), Vec<usize>>,
    ranked: BTreeSet<PairKey>,
    // pairs whose concatenation already exists as a token; never ranked
    banned: HashSet<(u32, u32)>,
}

impl Trainer {
    fn key(&self, pair: (u32, u32), count: u64) -> PairKey {
        (
            Reverse(count),
            self.tokens[pair.0 as usize].clone(),
            self.tokens[pair.1 as usize].clone(),
            pair.0,
            pair.1,
        )
    }

    fn add_pair_count(&mut self, pair: (u32, u32), delta: i64) {
        let old = self.pair_counts.get(&pair).copied().unwrap_or(0);
        let new = (old as i64 + delta) as u64;
        let ranked = !self.banned.contains(&pair);
        if old > 0 && ranked {
            let k = self.key(pair, old);
            self.ranked.remove(&k);
        }
        if new > 0 {
            if ranked {
                let k = self.key(pair, new);
                self.ranked.insert(k);
            }
            self.pair_counts.insert(pair, new);
        } else {
            self.pair_counts.remove(&pair);
        }
    }

    fn word_pair_deltas(word: &[u32], count: u64, sign: i64, deltas: &mut HashMap<(u32, u32), i64>) {
        for w in word.windows(2) {
            *deltas.entry((w[0], w[1])).or_insert(0) += sign * count as i64;
        }
    }

    fn best(&self) -> Option<((u32, u32), u64)> {
        self.ranked.iter().next().map(|k| ((k.3, k.4), k.0 .0))
    }
}

pub(crate) fn merge_word(word: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == pair.0 && word[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    out
}

/// Train a byte-level BPE vocabulary of at most `target_size` tokens.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Vocab> {
    if corpus.is_empty() || corpus.iter().all(|d| d.as_ref().is_empty()) {
        return invalid("corpus is empty");
    }
    let (base, specials) = base_tokens();
    if target_size < base.len() {
        return invalid(format!(
            "target size {target_size} is below the byte alphabet plus specials ({})",
            base.len()
        ));
    }
    let chunks = chunk_counts(corpus);
    let mut tr = Trainer {
        token_set: base
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect(),
        tokens: base,
        words: chunks
            .iter()
            .map(|(b, _)| b.iter().map(|&x| x as u32).collect())
            .collect(),
        word_counts: chunks.iter().map(|(_, c)| *c).collect(),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
        ranked: BTreeSet::new(),
        banned: HashSet::new(),
    };
    let mut init: HashMap<(u32, u32), i64> = HashMap::new();
    for (wi, word) in tr.words.iter().enumerate() {
        Trainer::word_pair_deltas(word, tr.word_counts[wi], 1, &mut init);
        for w in word.windows(2) {
            tr.pair_words.entry((w[0], w[1])).or_default().push(wi);
        }
    }
    let mut init: Vec<_> = init.into_iter().collect();
    init.sort_unstable();
    for (pair, d) in init {
        tr.add_pair_count(pair, d);
    }

    let mut merges = Vec::new();
    while tr.tokens.len() < target_size {
        let Some((pair, count)) = tr.best() else { break };
        if count < MIN_PAIR_COUNT {
            break;
        }
        let mut joined = tr.tokens[pair.0 as usize].clone();
        joined.extend_from_slice(&tr.tokens[pair.1 as usize]);
        if tr.token_set.contains_key(&joined) {
            // Same bytes reachable through a different split; keep ids unique.
            let k = tr.key(pair, count);
            tr.ranked.remove(&k);
            tr.banned.insert(pair);
            continue;
        }
        let new_id = tr.tokens.len() as u32;
        tr.token_set.insert(joined.clone(), new_id);
        tr.tokens.push(joined);
        merges.push(pair);

        let mut affected = tr.pair_words.remove(&pair).unwrap_or_default();
        affected.sort_unstable();
        affected.dedup();
        let mut deltas: HashMap<(u32, u32), i64> = HashMap::new();
        for wi in affected {
            let word = &tr.words[wi];
            if !word.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            let merged = merge_word(word, pair, new_id);
            let c = tr.word_counts[wi];
            Trainer::word_pair_deltas(word, c, -1, &mut deltas);
            Trainer::word_pair_deltas(&merged, c, 1, &mut deltas);
            for w in merged.windows(2) {
                if w[0] == new_id || w[1] == new_id {
                    tr.pair_words.entry((w[0], w[1])).or_default().push(wi);
                }
            }
            tr.words[wi] = merged;
        }
        let mut deltas: Vec<_> = deltas.into_iter().filter(|(_, d)| *d != 0).collect();
        deltas.sort_unstable();
        for (p, d) in deltas {
            tr.add_pair_count(p, d);
        }
    }
    Vocab::from_parts(tr.tokens, merges, specials)
}

/// Apply the vocabulary's merges to a raw byte string, lowest rank first.
pub fn encode_bytes(vocab: &Vocab, bytes: &[u8]) -> Vec<u32> {
    let mut ids: Vec<u32> = bytes.iter().map(|&b| b as u32).collect();
    loop {
        let best = ids
            .windows(2)
            .filter_map(|w| vocab.merge_rank((w[0], w[1])))
            .min();
        let Some(rank) = best else { break };
        let pair = vocab.merges()[rank as usize];
        ids = merge_word(&ids, pair, vocab.merge_output(rank));
    }
    ids
}

/// Encode UTF-8 text. Special-token literals map to their ids.
pub fn encode(vocab: &Vocab, text: &str) -> Vec<u32> {
    let mut out = Vec::new();
    for piece in split_specials(text) {
        match piece {
            Piece::Special(sp) => out.push(vocab.special(sp)),
            Piece::Text(t) => {
                for c in chunks(t) {
                    out.extend(encode_bytes(vocab, c.as_bytes()));
                }
            }
        }
    }
    out
}

pub fn decode_bytes(vocab: &Vocab, ids: &[u32]) -> Vec<u8> {
    let mut out = Vec::new();
    for &id in ids {
        if let Some(t) = vocab.token(id) {
            out.extend_from_slice(t);
        }
    }
    out
}

/// Decode ids to text; invalid UTF-8 sequences are replaced.
pub fn decode(vocab: &Vocab, ids: &[u32]) -> String {
    String::from_utf8_lossy(&decode_bytes(vocab, ids)).into_owned()
}
