//! JSONL datasets: one `{"text": ..., "label": 0|1}` object per line, with an
//! optional `"split": "train"|"test"` field.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use spattn_core::data::{Corpus, Example, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}:{line}: {msg}")]
    Line { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: no examples")]
    Empty(PathBuf),
    #[error("no training examples after splitting")]
    NoTrain,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    text: String,
    label: serde_json::Value,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub tokens: Vec<String>,
    pub label: u8,
    pub split: Option<Split>,
    /// 1-based line number in the source file.
    pub line: usize,
}

/// Lowercases, turns every non-alphanumeric character into whitespace and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn parse_line(path: &Path, line: usize, raw: &str) -> Result<RawExample, IngestError> {
    let err = |msg: String| IngestError::Line { path: path.to_owned(), line, msg };
    let rec: Record = serde_json::from_str(raw).map_err(|e| err(format!("malformed record: {e}")))?;
    let label = match rec.label.as_u64() {
        Some(l @ (0 | 1)) => l as u8,
        _ => return Err(err(format!("label must be 0 or 1, got {}", rec.label))),
    };
    let split = match rec.split.as_deref() {
        None => None,
        Some("train") => Some(Split::Train),
        Some("test") => Some(Split::Test),
        Some(other) => return Err(err(format!("unknown split {other:?}"))),
    };
    let tokens = tokenize(&rec.text);
    if tokens.is_empty() {
        return Err(err("text has no tokens".into()));
    }
    Ok(RawExample { tokens, label, split, line })
}

/// Parses every non-blank line; the first bad line aborts with its number.
pub fn read_jsonl(path: &Path) -> Result<Vec<RawExample>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        out.push(parse_line(path, i + 1, raw)?);
    }
    if out.is_empty() {
        return Err(IngestError::Empty(path.to_owned()));
    }
    Ok(out)
}

/// Vocabulary from training tokens seen at least `min_freq` times, ordered by
/// descending frequency then lexically.
pub fn build_vocabulary<'a>(train: impl IntoIterator<Item = &'a RawExample>, min_freq: usize) -> Vocabulary {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in train {
        for t in &ex.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab = Vocabulary::new();
    for (t, _) in kept {
        vocab.insert(t);
    }
    vocab
}

fn index(vocab: &Vocabulary, ex: &RawExample) -> Example {
    Example { tokens: ex.tokens.iter().map(|t| vocab.lookup(t)).collect(), label: ex.label, planted: None }
}

#[derive(Debug, Clone)]
pub struct JsonlOptions {
    pub min_freq: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for JsonlOptions {
    fn default() -> Self {
        JsonlOptions { min_freq: 2, test_fraction: 0.2, seed: 0 }
    }
}

/// Splits, builds the vocabulary from the training part and indexes both.
///
/// Explicit `split` fields win. When a separate test file is given every
/// unmarked line of `train` trains. Otherwise a seeded `test_fraction` of the
/// unmarked lines is held out.
pub fn ingest(train: &Path, test: Option<&Path>, opts: &JsonlOptions) -> Result<Corpus, IngestError> {
    let mut rows = read_jsonl(train)?;
    let has_test_file = test.is_some();
    if let Some(t) = test {
        for mut ex in read_jsonl(t)? {
            ex.split = Some(Split::Test);
            rows.push(ex);
        }
    }
    let mut unmarked: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.split.is_none()).map(|(i, _)| i).collect();
    let any_marked = unmarked.len() < rows.len();
    if any_marked || has_test_file {
        for &i in &unmarked {
            rows[i].split = Some(Split::Train);
        }
    } else {
        unmarked.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
        let n_test = (unmarked.len() as f64 * opts.test_fraction).round() as usize;
        for (k, &i) in unmarked.iter().enumerate() {
            rows[i].split = Some(if k < n_test { Split::Test } else { Split::Train });
        }
    }
    let vocab = build_vocabulary(rows.iter().filter(|r| r.split == Some(Split::Train)), opts.min_freq);
    let pick = |s: Split| rows.iter().filter(|r| r.split == Some(s)).map(|r| index(&vocab, r)).collect::<Vec<_>>();
    let (train, test) = (pick(Split::Train), pick(Split::Test));
    if train.is_empty() {
        return Err(IngestError::NoTrain);
    }
    Ok(Corpus { vocab, train, test })
}

/// Writes a corpus back out as JSONL with explicit splits.
pub fn write_jsonl(corpus: &Corpus, path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    for (split, examples) in [("train", &corpus.train), ("test", &corpus.test)] {
        for ex in examples {
            let text: Vec<&str> = ex.tokens.iter().map(|&t| corpus.vocab.token(t).unwrap_or("<unk>")).collect();
            let rec = serde_json::json!({ "text": text.join(" "), "label": ex.label, "split": split });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
    }
    fs::write(path, out)
}
