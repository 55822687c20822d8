//! Interaction-log ingestion, preprocessing, splits, and synthetic corpora.

pub mod ingest;
pub mod store;
pub mod synth;

use std::collections::HashMap;

pub use ingest::{
    filter_sessions, ingest_path, ingest_reader, parse_line, sequence_split, temporal_split,
    validation_split,
};
pub use synth::{generate_mode_separable, synth_generate, ModeSeparable, SynthConfig};

/// Dense item index; 0 is reserved for padding and never used by a real item.
pub type ItemIndex = u32;

/// One parsed log line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub session_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

/// A session before vocabulary mapping: raw item ids with their timestamps,
/// already in chronological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSession {
    pub id: String,
    pub items: Vec<String>,
    pub timestamps: Vec<i64>,
}

impl RawSession {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn last_timestamp(&self) -> i64 {
        *self.timestamps.last().expect("session is never empty")
    }
}

/// Bidirectional raw-id <-> dense-index map. Indices start at 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemVocab {
    by_raw: HashMap<String, ItemIndex>,
    raws: Vec<String>,
}

impl ItemVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary over the items of `sessions`, indexed in order of first
    /// appearance.
    pub fn from_sessions(sessions: &[RawSession]) -> Self {
        let mut vocab = Self::new();
        for s in sessions {
            for item in &s.items {
                vocab.get_or_insert(item);
            }
        }
        vocab
    }

    /// Identity vocabulary over `1..=n` with raw ids `i1..in`; used by
    /// synthetic corpora that skip ingestion.
    pub fn dense(n: usize) -> Self {
        let mut vocab = Self::new();
        for i in 1..=n {
            vocab.get_or_insert(&format!("i{i}"));
        }
        vocab
    }

    pub fn get_or_insert(&mut self, raw: &str) -> ItemIndex {
        if let Some(&idx) = self.by_raw.get(raw) {
            return idx;
        }
        let idx = (self.raws.len() + 1) as ItemIndex;
        self.by_raw.insert(raw.to_string(), idx);
        self.raws.push(raw.to_string());
        idx
    }

    pub fn index_of(&self, raw: &str) -> Option<ItemIndex> {
        self.by_raw.get(raw).copied()
    }

    pub fn raw_of(&self, index: ItemIndex) -> Option<&str> {
        if index == 0 {
            return None;
        }
        self.raws.get(index as usize - 1).map(|s| s.as_str())
    }

    /// Number of items (excluding the padding index 0).
    pub fn len(&self) -> usize {
        self.raws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raws.is_empty()
    }

    /// Raw ids in index order (index 1 first).
    pub fn raws(&self) -> &[String] {
        &self.raws
    }
}

/// One supervised pair: a session prefix and the item that followed it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub prefix: Vec<ItemIndex>,
    pub target: ItemIndex,
}

impl Example {
    pub fn new(prefix: Vec<ItemIndex>, target: ItemIndex) -> Self {
        Example { prefix, target }
    }
}

/// Fully preprocessed dataset: disjoint train/valid/test pairs over one item
/// vocabulary built from the training split.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
    pub vocab: ItemVocab,
}

impl Dataset {
    pub fn n_items(&self) -> usize {
        self.vocab.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no interactions")]
    EmptyDataset,
    #[error("temporal split left no training sessions (holdout covers the whole span)")]
    EmptyTrain,
    #[error("generation error: {0}")]
    Generation(String),
    #[error("dataset format error in {path}: {message}")]
    Format { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Options for the full raw-log -> dataset pipeline.
#[derive(Clone, Debug)]
pub struct PreprocessOptions {
    /// Items occurring fewer times than this across the corpus are removed.
    pub min_item_freq: u64,
    /// Sessions whose last interaction falls in the final window of this many
    /// seconds become the test split.
    pub holdout_secs: i64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            min_item_freq: 5,
            holdout_secs: 86_400,
            valid_fraction: 0.10,
            seed: 42,
        }
    }
}

/// Filter, temporally split, index against the train vocabulary, expand into
/// prefix/target pairs, and carve out the validation subset.
pub fn preprocess(
    sessions: Vec<RawSession>,
    opts: &PreprocessOptions,
) -> Result<Dataset, DataError> {
    let filtered = filter_sessions(sessions, opts.min_item_freq);
    if filtered.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let (train_raw, test_raw) = temporal_split(filtered, opts.holdout_secs)?;

    let vocab = ItemVocab::from_sessions(&train_raw);
    let index_session = |s: &RawSession, vocab: &ItemVocab| -> Vec<ItemIndex> {
        s.items
            .iter()
            .filter_map(|raw| vocab.index_of(raw))
            .collect()
    };

    let mut train_pairs = Vec::new();
    for s in &train_raw {
        let items = index_session(s, &vocab);
        train_pairs.extend(sequence_split(&items));
    }
    let mut test_pairs = Vec::new();
    for s in &test_raw {
        // Items unseen in training have no embedding; drop them, and drop
        // sessions that shrink below two interactions.
        let items = index_session(s, &vocab);
        if items.len() >= 2 {
            test_pairs.extend(sequence_split(&items));
        }
    }

    let (train_pairs, valid_pairs) = validation_split(train_pairs, opts.valid_fraction, opts.seed);

    Ok(Dataset {
        train: train_pairs,
        valid: valid_pairs,
        test: test_pairs,
        vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, items: &[&str], start: i64) -> RawSession {
        RawSession {
            id: id.to_string(),
            items: items.iter().map(|s| s.to_string()).collect(),
            timestamps: (0..items.len()).map(|k| start + k as i64).collect(),
        }
    }

    #[test]
    fn vocab_indices_start_at_one() {
        let sessions = vec![session("s1", &["x", "y", "x"], 0)];
        let vocab = ItemVocab::from_sessions(&sessions);
        assert_eq!(vocab.index_of("x"), Some(1));
        assert_eq!(vocab.index_of("y"), Some(2));
        assert_eq!(vocab.raw_of(0), None);
        assert_eq!(vocab.raw_of(1), Some("x"));
    }

    #[test]
    fn preprocess_drops_unseen_test_items() {
        // Items a,b,c each occur >= 5 times in train-era sessions; z occurs 5
        // times but only in the test window, so it is filtered-survivable yet
        // absent from the train vocabulary.
        let mut sessions = Vec::new();
        for k in 0..5 {
            sessions.push(session(&format!("tr{k}"), &["a", "b", "c"], 100 * k as i64));
        }
        for k in 0..5 {
            sessions.push(session(
                &format!("te{k}"),
                &["a", "z", "b"],
                1_000_000 + k as i64 * 10,
            ));
        }
        let opts = PreprocessOptions {
            min_item_freq: 5,
            holdout_secs: 10_000,
            valid_fraction: 0.0,
            seed: 1,
        };
        let ds = preprocess(sessions, &opts).unwrap();
        assert!(ds.vocab.index_of("z").is_none());
        // Test prefixes/targets only contain vocabulary items.
        for ex in &ds.test {
            assert!(ex
                .prefix
                .iter()
                .all(|&i| i >= 1 && i as usize <= ds.n_items()));
            assert!(ex.target as usize <= ds.n_items() && ex.target >= 1);
        }
        assert!(!ds.test.is_empty());
    }
}
