use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, Example, ItemIndex, ItemVocab, RawSession};

/// Knobs for the repeat/explore clickstream generator.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_sessions: usize,
    pub n_items: usize,
    /// Session lengths are drawn uniformly from `min_len..=max_len`.
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that each next item repeats an earlier item of the session.
    pub repeat_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_sessions: 1000,
            n_items: 500,
            min_len: 3,
            max_len: 8,
            repeat_rate: 0.4,
            seed: 42,
        }
    }
}

/// Generate sessions where each next item is a uniformly random earlier
/// (distinct) item with probability `repeat_rate` and a uniformly random
/// unseen item otherwise. Timestamps are synthetic and strictly increasing
/// across sessions, so temporal splitting behaves sensibly.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<RawSession>, DataError> {
    if !(0.0..=1.0).contains(&cfg.repeat_rate) {
        return Err(DataError::Generation(format!(
            "repeat_rate {} outside [0, 1]",
            cfg.repeat_rate
        )));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(DataError::Generation(format!(
            "bad length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    if cfg.repeat_rate == 0.0 && cfg.n_items < cfg.max_len {
        return Err(DataError::Generation(format!(
            "{} items cannot fill distinct sessions of length {}",
            cfg.n_items, cfg.max_len
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sessions = Vec::with_capacity(cfg.n_sessions);
    for s in 0..cfg.n_sessions {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut distinct: Vec<usize> = Vec::with_capacity(len);
        let mut items: Vec<usize> = Vec::with_capacity(len);
        for k in 0..len {
            let repeat = k > 0 && rng.gen::<f64>() < cfg.repeat_rate;
            let item = if repeat {
                distinct[rng.gen_range(0..distinct.len())]
            } else {
                let mut candidate = rng.gen_range(0..cfg.n_items);
                let mut tries = 0;
                while distinct.contains(&candidate) {
                    candidate = rng.gen_range(0..cfg.n_items);
                    tries += 1;
                    if tries > 16 * cfg.n_items {
                        return Err(DataError::Generation("ran out of unseen items".to_string()));
                    }
                }
                candidate
            };
            if !distinct.contains(&item) {
                distinct.push(item);
            }
            items.push(item);
        }
        let base = 1_600_000_000 + s as i64 * 3600;
        sessions.push(RawSession {
            id: format!("s{s:06}"),
            items: items.iter().map(|i| format!("i{}", i + 1)).collect(),
            timestamps: (0..len).map(|k| base + k as i64 * 10).collect(),
        });
    }
    Ok(sessions)
}

/// A corpus split into a repeat group and an explore group, used to probe
/// mode separation.
///
/// Repeat-group pairs follow one of a few duplicate-heavy key templates, and
/// the target re-clicks the template-designated key, so which item returns is
/// a function of the pattern, not of item identity. Explore-group pairs have
/// all-distinct prefixes and a target drawn from a reserved pool of items
/// that never appears in any prefix.
pub struct ModeSeparable {
    pub dataset: Dataset,
    /// Test pairs labelled `true` if they belong to the repeat group.
    pub test_is_repeat: Vec<bool>,
}

/// Key templates paired with the (0-based) key whose item is the target.
const REPEAT_TEMPLATES: &[(&[u8], u8)] = &[
    (&[1, 2, 1, 2, 1], 1), // ABABA -> A
    (&[1, 2, 3, 3, 2], 3), // ABCCB -> C
    (&[1, 1, 2, 2, 3], 1), // AABBC -> A
    (&[1, 2, 3, 1, 2], 2), // ABCAB -> B
];

pub fn generate_mode_separable(
    n_train_pairs: usize,
    n_test_pairs: usize,
    seed: u64,
) -> ModeSeparable {
    // Prefix items come from the core range, explore targets from the pool.
    let n_core: usize = 40;
    let n_pool: usize = 20;
    let n_items = n_core + n_pool;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let make_pair = |rng: &mut ChaCha8Rng, repeat: bool| -> Example {
        if repeat {
            let (template, target_key) = REPEAT_TEMPLATES[rng.gen_range(0..REPEAT_TEMPLATES.len())];
            let n_keys = *template.iter().max().unwrap() as usize;
            let mut core: Vec<ItemIndex> = (1..=n_core as ItemIndex).collect();
            core.shuffle(rng);
            let key_items = &core[..n_keys];
            let prefix: Vec<ItemIndex> = template
                .iter()
                .map(|&k| key_items[k as usize - 1])
                .collect();
            Example::new(prefix, key_items[target_key as usize - 1])
        } else {
            let mut core: Vec<ItemIndex> = (1..=n_core as ItemIndex).collect();
            core.shuffle(rng);
            let prefix = core[..5].to_vec();
            let target = (n_core + 1 + rng.gen_range(0..n_pool)) as ItemIndex;
            Example::new(prefix, target)
        }
    };

    let mut train = Vec::with_capacity(n_train_pairs);
    for i in 0..n_train_pairs {
        train.push(make_pair(&mut rng, i % 2 == 0));
    }
    let mut test = Vec::with_capacity(n_test_pairs);
    let mut test_is_repeat = Vec::with_capacity(n_test_pairs);
    for i in 0..n_test_pairs {
        let repeat = i % 2 == 0;
        test.push(make_pair(&mut rng, repeat));
        test_is_repeat.push(repeat);
    }
    let n_valid = (n_train_pairs / 10).max(1).min(train.len());
    let valid = train.split_off(train.len() - n_valid);

    ModeSeparable {
        dataset: Dataset {
            train,
            valid,
            test,
            vocab: ItemVocab::dense(n_items),
        },
        test_is_repeat,
    }
}
