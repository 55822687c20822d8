//! Top-N ranking metrics and the evaluation loop.

use serde::Serialize;

use crate::data::{Example, ItemIndex};

/// Anything that scores the whole vocabulary for a session prefix. Scores are
/// indexed `0..=n_items`; index 0 (padding) is never ranked.
pub trait Scorer {
    fn scores(&self, prefix: &[ItemIndex]) -> Vec<f64>;
    fn n_items(&self) -> usize;
}

/// 1-based rank of `target` under descending scores over items `1..=n`, with
/// ties broken by ascending item index.
pub fn rank_of(scores: &[f64], target: ItemIndex) -> usize {
    let t = target as usize;
    assert!(t >= 1 && t < scores.len(), "target outside score vector");
    let ts = scores[t];
    let mut rank = 1;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if i == t {
            continue;
        }
        if s > ts || (s == ts && i < t) {
            rank += 1;
        }
    }
    rank
}

/// 1 if the target ranks within the top `n`, else 0.
pub fn precision_at(scores: &[f64], target: ItemIndex, n: usize) -> f64 {
    if rank_of(scores, target) <= n {
        1.0
    } else {
        0.0
    }
}

/// Reciprocal rank, or 0 when the rank exceeds `n`.
pub fn mrr_at(scores: &[f64], target: ItemIndex, n: usize) -> f64 {
    let rank = rank_of(scores, target);
    if rank <= n {
        1.0 / rank as f64
    } else {
        0.0
    }
}

/// `1 / log2(rank + 1)`, or 0 when the rank exceeds `n`.
pub fn ndcg_at(scores: &[f64], target: ItemIndex, n: usize) -> f64 {
    let rank = rank_of(scores, target);
    if rank <= n {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MetricRow {
    pub n: usize,
    pub precision: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EvalReport {
    pub pairs: usize,
    pub rows: Vec<MetricRow>,
}

pub const DEFAULT_CUTOFFS: [usize; 5] = [1, 3, 5, 10, 20];

impl EvalReport {
    pub fn row(&self, n: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn mrr(&self, n: usize) -> f64 {
        self.row(n).map(|r| r.mrr).unwrap_or(0.0)
    }

    pub fn precision(&self, n: usize) -> f64 {
        self.row(n).map(|r| r.precision).unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,precision,mrr,ndcg\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.n, r.precision, r.mrr, r.ndcg
            ));
        }
        out
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pairs evaluated: {}", self.pairs)?;
        writeln!(
            f,
            "{:>4} {:>10} {:>10} {:>10}",
            "N", "P@N", "MRR@N", "NDCG@N"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>4} {:>10.4} {:>10.4} {:>10.4}",
                r.n, r.precision, r.mrr, r.ndcg
            )?;
        }
        Ok(())
    }
}

/// Average each metric over all pairs at every cutoff.
///
/// Per-pair metrics depend only on the target's rank, so accumulation goes
/// through a rank histogram; the report is bit-identical under any
/// permutation of `pairs`.
pub fn evaluate<S: Scorer>(scorer: &S, pairs: &[Example], cutoffs: &[usize]) -> EvalReport {
    let mut rank_counts: std::collections::BTreeMap<usize, u64> = std::collections::BTreeMap::new();
    for ex in pairs {
        let scores = scorer.scores(&ex.prefix);
        debug_assert_eq!(scores.len(), scorer.n_items() + 1);
        *rank_counts.entry(rank_of(&scores, ex.target)).or_insert(0) += 1;
    }
    let count = pairs.len().max(1) as f64;
    EvalReport {
        pairs: pairs.len(),
        rows: cutoffs
            .iter()
            .map(|&n| {
                let mut p = 0.0;
                let mut m = 0.0;
                let mut g = 0.0;
                for (&rank, &c) in rank_counts.range(..=n) {
                    let c = c as f64;
                    p += c;
                    m += c / rank as f64;
                    g += c / ((rank + 1) as f64).log2();
                }
                MetricRow {
                    n,
                    precision: p / count,
                    mrr: m / count,
                    ndcg: g / count,
                }
            })
            .collect(),
    }
}

impl Scorer for crate::model::Model {
    fn scores(&self, prefix: &[ItemIndex]) -> Vec<f64> {
        self.forward(prefix).combined
    }

    fn n_items(&self) -> usize {
        self.n_items
    }
}
