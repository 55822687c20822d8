//! Sanity baselines: popularity ranking and item-to-item nearest neighbors.

use std::collections::HashMap;

use crate::data::{Example, ItemIndex};
use crate::metrics::Scorer;

/// Recommends the most popular items regardless of the session. Popularity
/// is the target frequency over the training pairs.
pub struct Pop {
    counts: Vec<f64>,
}

impl Pop {
    pub fn fit(train: &[Example], n_items: usize) -> Pop {
        let mut counts = vec![0.0; n_items + 1];
        for ex in train {
            counts[ex.target as usize] += 1.0;
        }
        counts[0] = f64::MIN;
        Pop { counts }
    }

    pub fn count_of(&self, item: ItemIndex) -> f64 {
        self.counts[item as usize]
    }
}

impl Scorer for Pop {
    fn scores(&self, _prefix: &[ItemIndex]) -> Vec<f64> {
        self.counts.clone()
    }

    fn n_items(&self) -> usize {
        self.counts.len() - 1
    }
}

/// Item-based nearest neighbors: candidates are scored by the cosine of
/// their co-occurrence vectors with the session's last item, computed over
/// binary pair-item incidence. Only the `k` most similar items per query
/// keep a nonzero score.
pub struct ItemKnn {
    n_items: usize,
    k: usize,
    /// Co-occurrence counts, keyed by the lower item index.
    cooc: HashMap<(ItemIndex, ItemIndex), f64>,
    support: Vec<f64>,
}

impl ItemKnn {
    pub fn fit(train: &[Example], n_items: usize, k: usize) -> ItemKnn {
        let mut cooc: HashMap<(ItemIndex, ItemIndex), f64> = HashMap::new();
        let mut support = vec![0.0; n_items + 1];
        for ex in train {
            let mut items: Vec<ItemIndex> = ex.prefix.clone();
            items.push(ex.target);
            items.sort_unstable();
            items.dedup();
            for &i in &items {
                support[i as usize] += 1.0;
            }
            for a in 0..items.len() {
                for b in a + 1..items.len() {
                    *cooc.entry((items[a], items[b])).or_insert(0.0) += 1.0;
                }
            }
        }
        ItemKnn {
            n_items,
            k,
            cooc,
            support,
        }
    }

    fn similarity(&self, a: ItemIndex, b: ItemIndex) -> f64 {
        if a == b {
            return 0.0;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        let c = match self.cooc.get(&key) {
            Some(&c) => c,
            None => return 0.0,
        };
        let denom = (self.support[a as usize] * self.support[b as usize]).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            c / denom
        }
    }
}

impl Scorer for ItemKnn {
    fn scores(&self, prefix: &[ItemIndex]) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_items + 1];
        let last = match prefix.last() {
            Some(&l) => l,
            None => return scores,
        };
        let mut sims: Vec<(ItemIndex, f64)> = (1..=self.n_items as ItemIndex)
            .map(|i| (i, self.similarity(last, i)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        sims.sort_by(|(ia, sa), (ib, sb)| sb.partial_cmp(sa).unwrap().then_with(|| ia.cmp(ib)));
        for &(item, sim) in sims.iter().take(self.k) {
            scores[item as usize] = sim;
        }
        scores
    }

    fn n_items(&self) -> usize {
        self.n_items
    }
}
