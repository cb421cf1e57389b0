//! Weighted binary edge classifier: model, loss, optimizer and training loop.
//!
//! Label 1 (retain) is the positive class. The classifier emits two raw
//! scores, `z0` for prune and `z1` for retain, turned into probabilities with
//! a two-way softmax.

mod loss;
mod model;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

pub use loss::{batch_loss, loss_and_gradients, softmax2, weighted_ce_loss, ClassWeights, Dropout, PROB_EPS};
pub use model::{Params, PrunerModel, MODEL_FORMAT};
pub use optim::{adamw_step, lr_at, AdamWConfig, OptimizerState};
pub use train::{read_training_log, train, write_training_log, EpochLog, TrainOutcome};

/// Training hyperparameters. The prune weight is always `1 - w_retain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields, default)]
pub struct TrainConfig<T> {
    pub w_retain: T,
    pub learning_rate: T,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub dropout_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        let adam = AdamWConfig::<T>::default();
        TrainConfig {
            w_retain: T::lit(0.5),
            learning_rate: T::lit(1e-5),
            epochs: 2,
            warmup_steps: 100,
            dropout_rate: T::lit(0.25),
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            batch_size: 128,
            hidden_dim: 0,
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn w_prune(&self) -> T {
        T::one() - self.w_retain
    }

    pub fn class_weights(&self) -> ClassWeights<T> {
        ClassWeights::from_retain(self.w_retain)
    }

    pub fn adamw(&self) -> AdamWConfig<T> {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        let bad = |what: &str| Err(Error::usage(format!("invalid training config: {what}")));
        if !(self.w_retain > zero && self.w_retain < one) {
            return bad("w_retain must lie in (0, 1)");
        }
        if !(self.learning_rate > zero && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.dropout_rate >= zero && self.dropout_rate < one) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.beta1 >= zero && self.beta1 < one && self.beta2 >= zero && self.beta2 < one) {
            return bad("adamw betas must lie in [0, 1)");
        }
        if !(self.eps > zero && self.eps.is_finite()) {
            return bad("adamw eps must be positive");
        }
        if !(self.weight_decay >= zero && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}
