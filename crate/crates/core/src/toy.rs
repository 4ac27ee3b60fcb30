//! Synthetic corpora for desk-scale experiments.
//!
//! A toy language is a fixed lexicon of syllable words plus a sparse
//! successor table, so sentences have learnable local structure. A sibling
//! language reuses the lexicon structure and grammar but rewrites some
//! syllables, giving two languages with partially shared surface forms.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BASE_SYLLABLES: [&str; 12] = [
    "ka", "lo", "mi", "ra", "te", "su", "no", "pe", "di", "fa", "gu", "ve",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLanguage {
    pub words: Vec<String>,
    /// Word indices, one syllable-index list per word.
    pub spelling: Vec<Vec<usize>>,
    pub syllables: Vec<String>,
    /// Allowed next words for each word.
    pub successors: Vec<Vec<usize>>,
}

impl ToyLanguage {
    pub fn generate(n_words: usize, seed: u64) -> Self {
        assert!(n_words >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let syllables: Vec<String> = BASE_SYLLABLES.iter().map(|s| s.to_string()).collect();
        let mut spelling: Vec<Vec<usize>> = Vec::new();
        while spelling.len() < n_words {
            let len = rng.gen_range(1..=3);
            let w: Vec<usize> = (0..len).map(|_| rng.gen_range(0..syllables.len())).collect();
            if !spelling.contains(&w) {
                spelling.push(w);
            }
        }
        let successors = (0..n_words)
            .map(|_| (0..3).map(|_| rng.gen_range(0..n_words)).collect())
            .collect();
        let mut lang = ToyLanguage {
            words: Vec::new(),
            spelling,
            syllables,
            successors,
        };
        lang.respell();
        lang
    }

    fn respell(&mut self) {
        self.words = self
            .spelling
            .iter()
            .map(|w| w.iter().map(|&s| self.syllables[s].as_str()).collect())
            .collect();
    }

    /// Same grammar and word shapes with the syllables at `replace` rewritten.
    pub fn sibling(&self, replace: &[(usize, &str)]) -> ToyLanguage {
        let mut out = self.clone();
        for &(i, s) in replace {
            out.syllables[i] = s.to_string();
        }
        out.respell();
        out
    }

    /// `n_docs` documents of 2..=6 sentences each.
    pub fn corpus(&self, n_docs: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Zipf-like start distribution
        let weights: Vec<f64> = (1..=self.words.len()).map(|r| 1.0 / r as f64).collect();
        let start = WeightedIndex::new(&weights).expect("positive weights");
        (0..n_docs)
            .map(|_| {
                let sentences: Vec<String> = (0..rng.gen_range(2..=6))
                    .map(|_| {
                        let mut w = start.sample(&mut rng);
                        let mut words = vec![self.words[w].clone()];
                        for _ in 0..rng.gen_range(4..=11) {
                            w = self.successors[w][rng.gen_range(0..self.successors[w].len())];
                            words.push(self.words[w].clone());
                        }
                        words.join(" ") + "."
                    })
                    .collect();
                sentences.join(" ")
            })
            .collect()
    }
}

/// The pair used by the transplant experiments: a source language and a
/// sibling with a third of its syllables rewritten.
pub fn bilingual_pair(n_words: usize, seed: u64) -> (ToyLanguage, ToyLanguage) {
    let a = ToyLanguage::generate(n_words, seed);
    let b = a.sibling(&[(1, "lu"), (4, "tsi"), (7, "bo"), (10, "xe")]);
    (a, b)
}
