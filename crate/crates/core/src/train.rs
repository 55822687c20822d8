//! Mini-batch training with per-epoch validation and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diff::optim::{adam_step, OptimizerConfig};
use crate::metrics::{evaluate, DEFAULT_CUTOFFS};
use crate::model::{Model, ModelConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation MRR@20;
    /// `0` disables early stopping.
    pub patience: usize,
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 100,
            seed: 42,
            patience: 3,
            optimizer: OptimizerConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Validation MRR@20; absent when the validation split is empty.
    pub valid_mrr20: Option<f64>,
}

pub struct TrainOutput {
    /// Model restored to the best-validation epoch (or the last epoch when
    /// there is no validation split).
    pub model: Model,
    pub log: Vec<EpochStats>,
    pub best_epoch: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    if dataset.train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    cfg.model.validate().map_err(TrainError::BadConfig)?;
    if cfg.batch_size == 0 {
        return Err(TrainError::BadConfig("batch_size must be positive".into()));
    }

    let mut model = Model::new(cfg.model.clone(), dataset.n_items(), cfg.seed);
    // Separate streams for shuffling and dropout keep epoch order independent
    // of how many random draws each forward pass consumes.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut best: Option<(f64, usize, crate::diff::ParamStore, u64)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let ex = &dataset.train[idx];
                let mut trace = model.forward_train(&ex.prefix, &mut dropout_rng);
                let loss = model.loss(&mut trace, ex.target);
                loss_sum += trace.tape.value(loss).item();
                trace.tape.backward(loss, scale, &mut model.store);
            }
            adam_step(&mut model.store, &cfg.optimizer, epoch);
            model.step += 1;
        }
        let train_loss = loss_sum / dataset.train.len() as f64;

        let valid_mrr20 = if dataset.valid.is_empty() {
            None
        } else {
            Some(evaluate(&model, &dataset.valid, &DEFAULT_CUTOFFS).mrr(20))
        };
        log.push(EpochStats {
            epoch,
            lr: cfg.optimizer.lr_at_epoch(epoch),
            train_loss,
            valid_mrr20,
        });

        if let Some(mrr) = valid_mrr20 {
            let improved = best.as_ref().is_none_or(|(b, _, _, _)| mrr > *b);
            if improved {
                best = Some((mrr, epoch, model.store.clone(), model.step));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    break;
                }
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, store, step)) => {
            model.store = store;
            model.step = step;
            epoch
        }
        None => log.last().map(|s| s.epoch).unwrap_or(0),
    };
    Ok(TrainOutput {
        model,
        log,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Example, ItemVocab};
    use crate::model::Activation;

    fn tiny_dataset() -> Dataset {
        // Deterministic next-item structure: 1->2->3->4, 5->6.
        let mut train = Vec::new();
        for _ in 0..4 {
            train.push(Example::new(vec![1], 2));
            train.push(Example::new(vec![1, 2], 3));
            train.push(Example::new(vec![1, 2, 3], 4));
            train.push(Example::new(vec![5], 6));
        }
        Dataset {
            valid: vec![Example::new(vec![1], 2), Example::new(vec![5], 6)],
            test: vec![Example::new(vec![1, 2], 3)],
            train,
            vocab: ItemVocab::dense(6),
        }
    }

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            seed: 11,
            patience: 0,
            optimizer: OptimizerConfig {
                l2: 0.0,
                decay_every: 0,
                ..OptimizerConfig::default()
            },
            model: ModelConfig {
                dim: 8,
                l_max: 4,
                l_pos: 8,
                eta: -1.0,
                gnn_iters: 1,
                mlp_depth: 2,
                mlp_activation: Activation::Relu,
                dropout: 0.0,
                ..ModelConfig::default()
            },
        }
    }

    #[test]
    fn same_seed_gives_identical_first_epoch_loss() {
        let ds = tiny_dataset();
        let cfg = tiny_config(1);
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.log[0].train_loss, b.log[0].train_loss);
    }

    #[test]
    fn loss_decreases_over_the_first_steps_on_a_fixed_batch() {
        // Five consecutive optimizer steps over one fixed batch must each
        // lower the batch loss at lr = 1e-3.
        let ds = tiny_dataset();
        let cfg = tiny_config(1);
        let mut model = Model::new(cfg.model.clone(), ds.n_items(), cfg.seed);
        let batch: Vec<&Example> = ds.train.iter().take(8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut last = f64::INFINITY;
        for step in 0..5 {
            model.store.zero_grads();
            let mut loss_sum = 0.0;
            for ex in &batch {
                let mut trace = model.forward_train(&ex.prefix, &mut rng);
                let loss = model.loss(&mut trace, ex.target);
                loss_sum += trace.tape.value(loss).item();
                trace
                    .tape
                    .backward(loss, 1.0 / batch.len() as f64, &mut model.store);
            }
            let mean = loss_sum / batch.len() as f64;
            assert!(mean < last, "loss {mean} did not decrease at step {step}");
            last = mean;
            adam_step(&mut model.store, &cfg.optimizer, 0);
        }
    }

    #[test]
    fn epoch_log_records_the_decay_schedule() {
        let ds = tiny_dataset();
        let mut cfg = tiny_config(7);
        cfg.optimizer.decay_every = 3;
        cfg.optimizer.decay_factor = 0.1;
        let out = train(&ds, &cfg).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < b * 1e-12;
        assert!(close(out.log[0].lr, 1e-3));
        assert!(close(out.log[3].lr, 1e-4));
        assert!(close(out.log[6].lr, 1e-5));
    }

    #[test]
    fn empty_train_set_is_an_error() {
        let ds = Dataset {
            vocab: ItemVocab::dense(3),
            ..Dataset::default()
        };
        assert!(matches!(
            train(&ds, &tiny_config(1)),
            Err(TrainError::EmptyTrainSet)
        ));
    }

    #[test]
    fn early_stopping_halts_without_improvement() {
        let ds = tiny_dataset();
        let mut cfg = tiny_config(50);
        cfg.patience = 2;
        // Freeze learning so validation MRR cannot improve after epoch 0.
        cfg.optimizer.learning_rate = 0.0;
        let out = train(&ds, &cfg).unwrap();
        assert!(out.log.len() <= 4, "ran {} epochs", out.log.len());
        assert_eq!(out.best_epoch, 0);
    }
}
