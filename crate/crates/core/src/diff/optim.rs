use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Adam hyperparameters plus the step-decay learning-rate schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Multiplied into the learning rate every `decay_every` epochs.
    pub decay_factor: f64,
    /// Decay interval in epochs; `0` disables decay.
    pub decay_every: usize,
    /// L2 coefficient, applied as `grad += l2 * value` before the update.
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            decay_factor: 0.1,
            decay_every: 3,
            l2: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    /// Effective learning rate at a given epoch (0-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        if self.decay_every == 0 {
            return self.learning_rate;
        }
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// One Adam update over every parameter in the store, using the schedule's
/// learning rate for `epoch`. Gradients are left untouched; callers zero them.
pub fn adam_step(store: &mut ParamStore, cfg: &OptimizerConfig, epoch: usize) {
    let lr = cfg.lr_at_epoch(epoch);
    for id in store.ids().collect::<Vec<_>>() {
        let p = store.get_mut(id);
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let n = p.value.len();
        for i in 0..n {
            let g = p.grad.data()[i] + cfg.l2 * p.value.data()[i];
            let m = cfg.beta1 * p.moment1.data()[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.moment2.data()[i] + (1.0 - cfg.beta2) * g * g;
            p.moment1.data_mut()[i] = m;
            p.moment2.data_mut()[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            p.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::tensor::Tensor;

    fn scalar_store(value: f64, grad: f64) -> (ParamStore, crate::diff::params::ParamId) {
        let mut ps = ParamStore::new();
        let id = ps.add("p", Tensor::scalar(value));
        ps.get_mut(id).grad = Tensor::scalar(grad);
        (ps, id)
    }

    #[test]
    fn first_step_matches_update_formula() {
        // value 1.0, grad 1.0, step 1, l2 = 0:
        //   m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
        //   new = 1 - lr * 1 / (1 + eps)
        let cfg = OptimizerConfig {
            l2: 0.0,
            ..OptimizerConfig::default()
        };
        let (mut ps, id) = scalar_store(1.0, 1.0);
        adam_step(&mut ps, &cfg, 0);
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((ps.get(id).value.item() - expected).abs() < 1e-15);
        assert_eq!(ps.get(id).step, 1);
    }

    #[test]
    fn zero_gradient_leaves_value_unchanged() {
        let cfg = OptimizerConfig {
            l2: 0.0,
            ..OptimizerConfig::default()
        };
        let (mut ps, id) = scalar_store(0.75, 0.0);
        adam_step(&mut ps, &cfg, 0);
        assert_eq!(ps.get(id).value.item(), 0.75);
    }

    #[test]
    fn schedule_decays_every_three_epochs() {
        let cfg = OptimizerConfig::default();
        assert!((cfg.lr_at_epoch(0) - 1e-3).abs() < 1e-18);
        assert!((cfg.lr_at_epoch(2) - 1e-3).abs() < 1e-18);
        assert!((cfg.lr_at_epoch(3) - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_at_epoch(6) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn decay_zero_disables_schedule() {
        let cfg = OptimizerConfig {
            decay_every: 0,
            ..OptimizerConfig::default()
        };
        assert_eq!(cfg.lr_at_epoch(100), 1e-3);
    }

    #[test]
    fn l2_pulls_value_toward_zero() {
        let cfg = OptimizerConfig {
            l2: 0.1,
            ..OptimizerConfig::default()
        };
        let (mut ps, id) = scalar_store(2.0, 0.0);
        adam_step(&mut ps, &cfg, 0);
        assert!(ps.get(id).value.item() < 2.0);
    }
}
