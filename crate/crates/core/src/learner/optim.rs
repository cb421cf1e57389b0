//! AdamW with decoupled weight decay and the warmup/linear-decay schedule.

use serde::{Deserialize, Serialize};

use super::model::Params;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamWConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Scalar> Default for AdamWConfig<T> {
    fn default() -> Self {
        AdamWConfig {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            weight_decay: T::lit(0.01),
        }
    }
}

/// First and second moment accumulators, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(like: &Params<T>) -> Self {
        OptimizerState {
            m: Params::zeros_like(like),
            v: Params::zeros_like(like),
            step: 0,
        }
    }
}

/// One AdamW update:
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + weight_decay·θ)` with bias-corrected moments.
pub fn adamw_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    params: &mut Params<T>,
    grads: &Params<T>,
    lr: T,
    cfg: &AdamWConfig<T>,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::usage("optimizer shapes do not match the parameters"));
    }
    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let one = T::one();
    let bc1 = one - cfg.beta1.powi(t);
    let bc2 = one - cfg.beta2.powi(t);

    let p_blocks = params.blocks_mut();
    let m_blocks = state.m.blocks_mut();
    let v_blocks = state.v.blocks_mut();
    for (((p, m), v), g) in p_blocks
        .into_iter()
        .zip(m_blocks)
        .zip(v_blocks)
        .zip(grads.blocks())
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (one - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (one - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let decay = cfg.weight_decay * p[i];
            p[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + decay);
        }
    }
    if let Some(block) = params.first_non_finite() {
        return Err(Error::numeric(block, "non-finite parameter after update"));
    }
    Ok(())
}

/// Learning rate at optimizer step `step`: linear ramp from 0 to `base` over
/// `warmup` steps, then linear decay to 0 at `total`.
pub fn lr_at<T: Scalar>(step: usize, base: T, warmup: usize, total: usize) -> T {
    if step >= total {
        return T::zero();
    }
    if step < warmup {
        return base * T::from_count(step) / T::from_count(warmup);
    }
    base * T::from_count(total - step) / T::from_count(total - warmup)
}
