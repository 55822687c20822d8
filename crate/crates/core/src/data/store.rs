//! On-disk layout of a preprocessed dataset.
//!
//! A dataset directory holds `vocab.tsv` (`raw_id<TAB>dense_index`, one item
//! per line, index order) and `train.txt` / `valid.txt` / `test.txt` with one
//! pair per line: comma-separated dense prefix indices, a tab, and the target
//! index.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataError, Dataset, Example, ItemIndex, ItemVocab};

const VOCAB_FILE: &str = "vocab.tsv";
const SPLIT_FILES: [(&str, Split); 3] = [
    ("train.txt", Split::Train),
    ("valid.txt", Split::Valid),
    ("test.txt", Split::Test),
];

#[derive(Clone, Copy)]
enum Split {
    Train,
    Valid,
    Test,
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    {
        let mut w = BufWriter::new(std::fs::File::create(dir.join(VOCAB_FILE))?);
        for (i, raw) in dataset.vocab.raws().iter().enumerate() {
            writeln!(w, "{}\t{}", raw, i + 1)?;
        }
        w.flush()?;
    }
    for (name, split) in SPLIT_FILES {
        let pairs = match split {
            Split::Train => &dataset.train,
            Split::Valid => &dataset.valid,
            Split::Test => &dataset.test,
        };
        let mut w = BufWriter::new(std::fs::File::create(dir.join(name))?);
        for ex in pairs {
            let prefix: Vec<String> = ex.prefix.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{}\t{}", prefix.join(","), ex.target)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let vocab_path = dir.join(VOCAB_FILE);
    let mut vocab = ItemVocab::new();
    let reader = BufReader::new(std::fs::File::open(&vocab_path)?);
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (raw, idx) = line.split_once('\t').ok_or_else(|| DataError::Format {
            path: vocab_path.display().to_string(),
            message: format!("line {}: expected raw<TAB>index", ln + 1),
        })?;
        let idx: ItemIndex = idx.parse().map_err(|e| DataError::Format {
            path: vocab_path.display().to_string(),
            message: format!("line {}: bad index: {e}", ln + 1),
        })?;
        let assigned = vocab.get_or_insert(raw);
        if assigned != idx {
            return Err(DataError::Format {
                path: vocab_path.display().to_string(),
                message: format!(
                    "line {}: index {idx} out of order (expected {assigned})",
                    ln + 1
                ),
            });
        }
    }
    let mut dataset = Dataset {
        vocab,
        ..Dataset::default()
    };
    for (name, split) in SPLIT_FILES {
        let path = dir.join(name);
        let pairs = read_pairs(&path, dataset.vocab.len())?;
        match split {
            Split::Train => dataset.train = pairs,
            Split::Valid => dataset.valid = pairs,
            Split::Test => dataset.test = pairs,
        }
    }
    Ok(dataset)
}

fn read_pairs(path: &Path, n_items: usize) -> Result<Vec<Example>, DataError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fmt_err = |message: String| DataError::Format {
            path: path.display().to_string(),
            message: format!("line {}: {message}", ln + 1),
        };
        let (prefix_s, target_s) = line
            .split_once('\t')
            .ok_or_else(|| fmt_err("expected prefix<TAB>target".to_string()))?;
        let mut prefix = Vec::new();
        for tok in prefix_s.split(',') {
            let idx: ItemIndex = tok
                .parse()
                .map_err(|e| fmt_err(format!("bad prefix index {tok:?}: {e}")))?;
            if idx == 0 || idx as usize > n_items {
                return Err(fmt_err(format!("prefix index {idx} outside vocabulary")));
            }
            prefix.push(idx);
        }
        let target: ItemIndex = target_s
            .trim()
            .parse()
            .map_err(|e| fmt_err(format!("bad target {target_s:?}: {e}")))?;
        if target == 0 || target as usize > n_items {
            return Err(fmt_err(format!("target {target} outside vocabulary")));
        }
        pairs.push(Example::new(prefix, target));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> Dataset {
        let mut vocab = ItemVocab::new();
        for raw in ["apple", "pear", "fig"] {
            vocab.get_or_insert(raw);
        }
        Dataset {
            train: vec![Example::new(vec![1], 2), Example::new(vec![1, 2], 3)],
            valid: vec![Example::new(vec![2], 1)],
            test: vec![Example::new(vec![3, 1], 2)],
            vocab,
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = std::env::temp_dir().join(format!("rnmsr-store-{}", std::process::id()));
        let ds = tiny_dataset();
        write_dataset(&dir, &ds).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.valid, ds.valid);
        assert_eq!(back.test, ds.test);
        assert_eq!(back.vocab, ds.vocab);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn files_use_the_documented_layout() {
        let dir = std::env::temp_dir().join(format!("rnmsr-store-fmt-{}", std::process::id()));
        write_dataset(&dir, &tiny_dataset()).unwrap();
        let vocab = std::fs::read_to_string(dir.join("vocab.tsv")).unwrap();
        assert_eq!(vocab, "apple\t1\npear\t2\nfig\t3\n");
        let train = std::fs::read_to_string(dir.join("train.txt")).unwrap();
        assert_eq!(train, "1\t2\n1,2\t3\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn out_of_vocabulary_index_is_rejected() {
        let dir = std::env::temp_dir().join(format!("rnmsr-store-bad-{}", std::process::id()));
        write_dataset(&dir, &tiny_dataset()).unwrap();
        std::fs::write(dir.join("test.txt"), "1,9\t2\n").unwrap();
        let err = read_dataset(&dir).unwrap_err();
        assert!(matches!(err, DataError::Format { .. }));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
