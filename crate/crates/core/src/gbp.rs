//! Group-level behavior patterns: item-independent relabelings of sessions.
//!
//! A session maps to a pattern by assigning each distinct item a key in order
//! of first appearance (1, 2, 3, ... rendered A, B, C, ...). Two sessions with
//! the same item-equality structure map to the same pattern, whatever their
//! item ids are. Valid patterns are exactly the restricted-growth strings:
//! the first key is 1 and each key exceeds the running maximum by at most 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::data::ItemIndex;

/// Key sequence for one session (or session suffix). Keys are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Vec<u8>);

impl Pattern {
    pub fn new(keys: Vec<u8>) -> Self {
        let p = Pattern(keys);
        assert!(
            p.is_restricted_growth(),
            "invalid pattern {:?}: not a restricted-growth string",
            p.0
        );
        p
    }

    pub fn keys(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_key(&self) -> u8 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn is_restricted_growth(&self) -> bool {
        let mut max = 0u8;
        for &k in &self.0 {
            if k == 0 || k > max + 1 {
                return false;
            }
            max = max.max(k);
        }
        !self.0.is_empty()
    }

    pub fn key_letter(key: u8) -> char {
        (b'A' + key - 1) as char
    }

    /// Compact form without separators, e.g. `ABAC`.
    pub fn compact(&self) -> String {
        self.0.iter().map(|&k| Self::key_letter(k)).collect()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|&k| Self::key_letter(k).to_string())
            .collect();
        write!(f, "{}", parts.join("\u{2192}"))
    }
}

/// Session-local map from item index to pattern key, in first-appearance
/// order: the k-th distinct item gets key k.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappingTable {
    entries: Vec<(ItemIndex, u8)>,
}

impl MappingTable {
    pub fn key_of(&self, item: ItemIndex) -> Option<u8> {
        self.entries
            .iter()
            .find(|(i, _)| *i == item)
            .map(|(_, k)| *k)
    }

    /// Pairs in key order (key k is at position k-1).
    pub fn entries(&self) -> &[(ItemIndex, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_mapping(items: &[ItemIndex]) -> MappingTable {
    assert!(!items.is_empty(), "build_mapping on an empty session");
    let mut table = MappingTable::default();
    for &item in items {
        if table.key_of(item).is_none() {
            let key = table.entries.len() as u8 + 1;
            table.entries.push((item, key));
        }
    }
    table
}

/// Pattern of a session. Sessions longer than `l_max` use only their last
/// `l_max` items, with a fresh mapping table built on that suffix so the key
/// alphabet never exceeds `l_max`.
pub fn extract_gbp(items: &[ItemIndex], l_max: usize) -> Pattern {
    assert!(!items.is_empty(), "extract_gbp on an empty session");
    let suffix = gbp_suffix(items, l_max);
    let table = build_mapping(suffix);
    Pattern(
        suffix
            .iter()
            .map(|&i| table.key_of(i).expect("item in own mapping"))
            .collect(),
    )
}

/// The window of a session that pattern extraction (and the repeat head) see.
pub fn gbp_suffix(items: &[ItemIndex], l_max: usize) -> &[ItemIndex] {
    assert!(l_max >= 1, "l_max must be at least 1");
    if items.len() > l_max {
        &items[items.len() - l_max..]
    } else {
        items
    }
}

/// All restricted-growth strings of lengths `1..=l_max` in lexicographic
/// order (a prefix sorts before its extensions).
pub fn enumerate_patterns(l_max: usize) -> Vec<Pattern> {
    assert!((1..=8).contains(&l_max), "l_max must be in 1..=8");
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    fn visit(prefix: &mut Vec<u8>, l_max: usize, out: &mut Vec<Pattern>) {
        if !prefix.is_empty() {
            out.push(Pattern(prefix.clone()));
        }
        if prefix.len() == l_max {
            return;
        }
        let max = prefix.iter().copied().max().unwrap_or(0);
        for k in 1..=max + 1 {
            prefix.push(k);
            visit(prefix, l_max, out);
            prefix.pop();
        }
    }
    visit(&mut prefix, l_max, &mut out);
    out
}

/// Dense index over a fixed pattern set, with a reserved trailing UNK slot
/// for patterns outside the set.
#[derive(Clone, Debug)]
pub struct PatternVocab {
    patterns: Vec<Pattern>,
    index: HashMap<Pattern, usize>,
}

impl PatternVocab {
    pub fn full(l_max: usize) -> Self {
        Self::from_patterns(enumerate_patterns(l_max))
    }

    pub fn from_patterns(patterns: Vec<Pattern>) -> Self {
        let mut index = HashMap::with_capacity(patterns.len());
        for (i, p) in patterns.iter().enumerate() {
            let prev = index.insert(p.clone(), i);
            assert!(prev.is_none(), "duplicate pattern {p} in vocab");
        }
        PatternVocab { patterns, index }
    }

    /// Number of known patterns, excluding UNK.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.patterns.len()
    }

    /// Rows needed in an embedding table: every pattern plus UNK.
    pub fn table_rows(&self) -> usize {
        self.patterns.len() + 1
    }

    pub fn index_of(&self, pattern: &Pattern) -> usize {
        self.index.get(pattern).copied().unwrap_or(self.unk_index())
    }

    pub fn get(&self, index: usize) -> Option<&Pattern> {
        self.patterns.get(index)
    }
}

/// Per-pattern next-action counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternStat {
    pub total: u64,
    pub repeat: u64,
    pub explore: u64,
    /// Count per pattern key (index 0 = key 1 = "A").
    pub per_key: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct GbpStats {
    pub per_pattern: BTreeMap<Pattern, PatternStat>,
    pub l_max: usize,
}

/// Classify each (prefix, target) pair as repeat or explore from the window
/// the repeat head can see: the target is a repeat iff it occurs in the last
/// `l_max` items of the prefix, and its key is read from the suffix mapping.
pub fn compute_stats<'a, I>(pairs: I, l_max: usize) -> GbpStats
where
    I: IntoIterator<Item = (&'a [ItemIndex], ItemIndex)>,
{
    let mut stats = GbpStats {
        per_pattern: BTreeMap::new(),
        l_max,
    };
    for (prefix, target) in pairs {
        let pattern = extract_gbp(prefix, l_max);
        let suffix = gbp_suffix(prefix, l_max);
        let n_keys = pattern.max_key() as usize;
        let entry = stats.per_pattern.entry(pattern).or_default();
        if entry.per_key.len() < n_keys {
            entry.per_key.resize(n_keys, 0);
        }
        entry.total += 1;
        if suffix.contains(&target) {
            entry.repeat += 1;
            let key = build_mapping(suffix)
                .key_of(target)
                .expect("repeat target is in suffix");
            entry.per_key[key as usize - 1] += 1;
        } else {
            entry.explore += 1;
        }
    }
    stats
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

/// Render stats as one row per pattern: per-key repeat percentages, their
/// sum, and the explore percentage, rounded to integers. Rows are ordered by
/// total count (descending), ties by pattern.
pub fn render_report(stats: &GbpStats, format: ReportFormat) -> String {
    let max_keys = stats.l_max.min(8);
    let mut rows: Vec<(&Pattern, &PatternStat)> = stats.per_pattern.iter().collect();
    rows.sort_by(|(pa, sa), (pb, sb)| sb.total.cmp(&sa.total).then_with(|| pa.cmp(pb)));

    let pct = |count: u64, total: u64| -> i64 {
        if total == 0 {
            0
        } else {
            (100.0 * count as f64 / total as f64).round() as i64
        }
    };

    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            let mut header = vec!["pattern".to_string(), "count".to_string()];
            for k in 1..=max_keys {
                header.push(format!("{}%", Pattern::key_letter(k as u8)));
            }
            header.push("sum%".to_string());
            header.push("new%".to_string());
            out.push_str(&header.join(","));
            out.push('\n');
            for (pattern, stat) in rows {
                let mut cells = vec![pattern.compact(), stat.total.to_string()];
                for k in 0..max_keys {
                    if k < pattern.max_key() as usize {
                        let c = stat.per_key.get(k).copied().unwrap_or(0);
                        cells.push(pct(c, stat.total).to_string());
                    } else {
                        cells.push(String::new());
                    }
                }
                cells.push(pct(stat.repeat, stat.total).to_string());
                cells.push(pct(stat.explore, stat.total).to_string());
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            let pattern_width = rows
                .iter()
                .map(|(p, _)| p.to_string().chars().count())
                .max()
                .unwrap_or(7)
                .max(7);
            out.push_str(&format!("{:<pattern_width$}  {:>8}  ", "pattern", "count"));
            for k in 1..=max_keys {
                out.push_str(&format!(
                    "{:>5}",
                    format!("{}%", Pattern::key_letter(k as u8))
                ));
            }
            out.push_str(&format!("{:>6}{:>6}\n", "sum%", "new%"));
            for (pattern, stat) in rows {
                out.push_str(&format!(
                    "{:<pattern_width$}  {:>8}  ",
                    pattern.to_string(),
                    stat.total
                ));
                for k in 0..max_keys {
                    if k < pattern.max_key() as usize {
                        let c = stat.per_key.get(k).copied().unwrap_or(0);
                        out.push_str(&format!("{:>5}", pct(c, stat.total)));
                    } else {
                        out.push_str(&format!("{:>5}", "/"));
                    }
                }
                out.push_str(&format!(
                    "{:>6}{:>6}\n",
                    pct(stat.repeat, stat.total),
                    pct(stat.explore, stat.total)
                ));
            }
        }
    }
    out
}
