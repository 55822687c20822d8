use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Example, Interaction, ItemIndex, RawSession};

/// Parse one log line: `session_id<TAB>item_id<TAB>timestamp`.
pub fn parse_line(line: &str, line_no: usize) -> Result<Interaction, DataError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(DataError::Parse {
            line: line_no,
            message: format!(
                "expected 3 tab-separated fields (session_id, item_id, timestamp), got {}",
                fields.len()
            ),
        });
    }
    let session_id = fields[0].trim();
    let item_id = fields[1].trim();
    if session_id.is_empty() {
        return Err(DataError::Parse {
            line: line_no,
            message: "empty session_id".to_string(),
        });
    }
    if item_id.is_empty() {
        return Err(DataError::Parse {
            line: line_no,
            message: "empty item_id".to_string(),
        });
    }
    let timestamp: i64 = fields[2].trim().parse().map_err(|e| DataError::Parse {
        line: line_no,
        message: format!("bad timestamp {:?}: {e}", fields[2].trim()),
    })?;
    if timestamp < 0 {
        return Err(DataError::Parse {
            line: line_no,
            message: format!("negative timestamp {timestamp}"),
        });
    }
    Ok(Interaction {
        session_id: session_id.to_string(),
        item_id: item_id.to_string(),
        timestamp,
    })
}

/// Read a log, group interactions by session, order each session by
/// timestamp (ties keep file order), and return sessions ordered by their
/// last timestamp. Lines starting with `#` and blank lines are skipped.
pub fn ingest_reader<R: Read>(reader: R) -> Result<Vec<RawSession>, DataError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_session: HashMap<String, Vec<(i64, usize, String)>> = HashMap::new();
    let mut n_interactions = 0usize;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let inter = parse_line(trimmed, i + 1)?;
        let entry = by_session
            .entry(inter.session_id.clone())
            .or_insert_with(|| {
                order.push(inter.session_id.clone());
                Vec::new()
            });
        entry.push((inter.timestamp, n_interactions, inter.item_id));
        n_interactions += 1;
    }
    if n_interactions == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut sessions = Vec::with_capacity(order.len());
    for id in order {
        let mut events = by_session.remove(&id).expect("session recorded");
        // Stable on (timestamp, file order): ties break by input order.
        events.sort_by_key(|(ts, ord, _)| (*ts, *ord));
        sessions.push(RawSession {
            id,
            items: events.iter().map(|(_, _, item)| item.clone()).collect(),
            timestamps: events.iter().map(|(ts, _, _)| *ts).collect(),
        });
    }
    sessions.sort_by_key(|s| s.last_timestamp());
    Ok(sessions)
}

pub fn ingest_path(path: &Path) -> Result<Vec<RawSession>, DataError> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file)
}

/// Iteratively remove items occurring fewer than `min_item_freq` times across
/// the corpus and sessions shorter than two interactions, until neither rule
/// fires. Removing an item can shorten a session below two, and dropping a
/// session lowers item counts, hence the fixed point.
pub fn filter_sessions(mut sessions: Vec<RawSession>, min_item_freq: u64) -> Vec<RawSession> {
    loop {
        sessions.retain(|s| s.len() >= 2);
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in &sessions {
            for item in &s.items {
                *counts.entry(item.as_str()).or_insert(0) += 1;
            }
        }
        let rare: Vec<String> = counts
            .iter()
            .filter(|(_, &c)| c < min_item_freq)
            .map(|(item, _)| item.to_string())
            .collect();
        if rare.is_empty() {
            return sessions;
        }
        let rare: std::collections::HashSet<String> = rare.into_iter().collect();
        for s in sessions.iter_mut() {
            let keep: Vec<usize> = (0..s.len())
                .filter(|&k| !rare.contains(&s.items[k]))
                .collect();
            if keep.len() != s.len() {
                s.items = keep.iter().map(|&k| s.items[k].clone()).collect();
                s.timestamps = keep.iter().map(|&k| s.timestamps[k]).collect();
            }
        }
    }
}

/// Split sessions by time: sessions whose last interaction falls within the
/// final `holdout_secs` window go to test, the rest to train.
pub fn temporal_split(
    sessions: Vec<RawSession>,
    holdout_secs: i64,
) -> Result<(Vec<RawSession>, Vec<RawSession>), DataError> {
    assert!(holdout_secs >= 0, "holdout must be non-negative");
    if sessions.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let max_ts = sessions
        .iter()
        .map(|s| s.last_timestamp())
        .max()
        .expect("non-empty");
    let cutoff = max_ts - holdout_secs;
    let (test, train): (Vec<_>, Vec<_>) = sessions
        .into_iter()
        .partition(|s| s.last_timestamp() > cutoff);
    if train.is_empty() {
        return Err(DataError::EmptyTrain);
    }
    Ok((train, test))
}

/// Expand a session into (prefix, target) pairs:
/// `([v1], v2), ([v1, v2], v3), ..., ([v1..v(n-1)], vn)`.
///
/// Panics if the session has fewer than two items; filtering guarantees the
/// contract upstream.
pub fn sequence_split(items: &[ItemIndex]) -> Vec<Example> {
    assert!(
        items.len() >= 2,
        "sequence_split requires length >= 2, got {}",
        items.len()
    );
    (1..items.len())
        .map(|k| Example::new(items[..k].to_vec(), items[k]))
        .collect()
}

/// Deterministically carve `round(fraction * n)` pairs out of `pairs` as the
/// validation set. `fraction` of zero yields an empty validation set.
pub fn validation_split(
    pairs: Vec<Example>,
    fraction: f64,
    seed: u64,
) -> (Vec<Example>, Vec<Example>) {
    assert!((0.0..1.0).contains(&fraction), "fraction must be in [0, 1)");
    let n_valid = (fraction * pairs.len() as f64).round() as usize;
    if n_valid == 0 {
        return (pairs, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    indices.shuffle(&mut rng);
    let valid_set: std::collections::HashSet<usize> = indices[..n_valid].iter().copied().collect();
    let mut train = Vec::with_capacity(pairs.len() - n_valid);
    let mut valid = Vec::with_capacity(n_valid);
    for (i, ex) in pairs.into_iter().enumerate() {
        if valid_set.contains(&i) {
            valid.push(ex);
        } else {
            train.push(ex);
        }
    }
    (train, valid)
}
