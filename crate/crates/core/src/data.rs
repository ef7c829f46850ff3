//! Labelled token sequences and the planted-keyword synthetic corpus.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: u8,
    /// Position of the label-determining keyword, when known.
    pub planted: Option<usize>,
}

/// Token to index map; index 0 is always `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[cfg_attr(feature = "serde", serde(skip))]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary { tokens: Vec::new(), index: BTreeMap::new() };
        v.insert(UNK);
        v
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Config("vocabulary must start with <unk>".into()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect::<BTreeMap<_, _>>();
        if index.len() != tokens.len() {
            return Err(Error::Config("duplicate vocabulary entries".into()));
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Index of `token`, or of `<unk>` when absent.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl Corpus {
    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::EmptyInput { op: "corpus" });
        }
        let v = self.vocab.len();
        for (split, examples) in [("train", &self.train), ("test", &self.test)] {
            for (i, ex) in examples.iter().enumerate() {
                if ex.tokens.is_empty() {
                    return Err(Error::Config(format!("{split} example {i} is empty")));
                }
                if let Some(&bad) = ex.tokens.iter().find(|&&t| t >= v) {
                    return Err(Error::OutOfVocabulary { index: bad, vocab: v });
                }
                if ex.label > 1 {
                    return Err(Error::Config(format!("{split} example {i} has label {}", ex.label)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Total vocabulary size including `<unk>` and the keywords.
    pub vocab_size: usize,
    pub seq_len: usize,
    /// Keywords per polarity.
    pub n_keywords: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { n_train: 1000, n_test: 300, vocab_size: 200, seq_len: 20, n_keywords: 5, seed: 0 }
    }
}

/// Noise sequences with exactly one polarity keyword planted at a random
/// position; the keyword's polarity is the label.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    let noise = spec
        .vocab_size
        .checked_sub(1 + 2 * spec.n_keywords)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config("need vocab_size > 2 * n_keywords + 1".into()))?;
    if spec.n_keywords == 0 || spec.seq_len == 0 || spec.n_train == 0 {
        return Err(Error::Config("n_keywords, seq_len and n_train must be positive".into()));
    }
    let mut vocab = Vocabulary::new();
    let pos: Vec<usize> = (0..spec.n_keywords).map(|k| vocab.insert(&format!("pos{k}"))).collect();
    let neg: Vec<usize> = (0..spec.n_keywords).map(|k| vocab.insert(&format!("neg{k}"))).collect();
    let noise_ids: Vec<usize> = (0..noise).map(|k| vocab.insert(&format!("w{k}"))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let make = |rng: &mut ChaCha8Rng| {
        let mut tokens: Vec<usize> = (0..spec.seq_len).map(|_| noise_ids[rng.gen_range(0..noise)]).collect();
        let label: u8 = rng.gen_range(0..2);
        let keywords = if label == 1 { &pos } else { &neg };
        let at = rng.gen_range(0..spec.seq_len);
        tokens[at] = keywords[rng.gen_range(0..spec.n_keywords)];
        Example { tokens, label, planted: Some(at) }
    };
    let train = (0..spec.n_train).map(|_| make(&mut rng)).collect();
    let test = (0..spec.n_test).map(|_| make(&mut rng)).collect();
    Ok(Corpus { vocab, train, test })
}
