//! Analytic gradients against central differences, and AdamW against a
//! scalar reference implementation.

#[path = "../common/mod.rs"]
mod common;

use cgprune_core::graph::Label;
use cgprune_core::learner::{
    adamw_step, batch_loss, loss_and_gradients, lr_at, AdamWConfig, ClassWeights, Dropout, Params, PrunerModel,
    OptimizerState,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::rng;

struct Case {
    model: PrunerModel<f64>,
    xs: Vec<Vec<f64>>,
    ys: Vec<Label>,
    w: ClassWeights<f64>,
}

fn random_case(seed: u64, hidden: usize) -> Case {
    let mut r = rng(seed);
    let d = r.random_range(1..6);
    let mut model = PrunerModel::<f64>::zeros(d, hidden);
    for i in 0..model.params.len() {
        model.params.set_flat(i, r.random_range(-1.0..1.0));
    }
    for j in 0..d {
        model.feature_mean[j] = r.random_range(-0.5..0.5);
        model.feature_std[j] = r.random_range(0.5..2.0);
    }
    let n = r.random_range(1..9);
    let xs = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let ys = (0..n).map(|_| if r.random_bool(0.5) { Label::Retain } else { Label::Prune }).collect();
    Case {
        model,
        xs,
        ys,
        w: ClassWeights::from_retain(r.random_range(0.05..0.95)),
    }
}

/// Largest relative error between analytic and central-difference gradients.
fn max_rel_error(c: &Case) -> f64 {
    let (_, g) = loss_and_gradients(&c.model, &c.xs, &c.ys, c.w, None::<Dropout<ChaCha8Rng>>).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..c.model.params.len() {
        let mut plus = c.model.clone();
        let mut minus = c.model.clone();
        let v = c.model.params.get_flat(i);
        plus.params.set_flat(i, v + h);
        minus.params.set_flat(i, v - h);
        let num = (batch_loss(&plus, &c.xs, &c.ys, c.w).unwrap() - batch_loss(&minus, &c.xs, &c.ys, c.w).unwrap())
            / (2.0 * h);
        let ana = g.get_flat(i);
        worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-4));
    }
    worst
}

/// Forward pass written out directly from the model definition.
fn reference_p_retain(m: &PrunerModel<f64>, x: &[f64]) -> f64 {
    let d = m.input_dim;
    let xs: Vec<f64> = (0..d).map(|j| (x[j] - m.feature_mean[j]) / m.feature_std[j]).collect();
    let a: Vec<f64> = if m.hidden_dim == 0 {
        xs
    } else {
        (0..m.hidden_dim)
            .map(|k| {
                ((0..d).map(|j| m.params.w_hidden[k * d + j] * xs[j]).sum::<f64>() + m.params.b_hidden[k]).tanh()
            })
            .collect()
    };
    let z = |c: usize| (0..a.len()).map(|j| m.params.w_out[c * a.len() + j] * a[j]).sum::<f64>() + m.params.b_out[c];
    1.0 / (1.0 + (z(0) - z(1)).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), hidden in 0usize..5) {
        let c = random_case(seed, hidden);
        let err = max_rel_error(&c);
        prop_assert!(err < 1e-5, "max relative error {}", err);
    }

    #[test]
    fn forward_matches_reference(seed in any::<u64>(), hidden in 0usize..5) {
        let c = random_case(seed, hidden);
        for x in &c.xs {
            let p = c.model.predict(x).unwrap();
            prop_assert!((p - reference_p_retain(&c.model, x)).abs() < 1e-14);
        }
    }

    #[test]
    fn schedule_shape(base in 1e-6f64..1.0, warmup in 0usize..50, extra in 1usize..200) {
        let total = warmup + extra;
        let lrs: Vec<f64> = (0..=total).map(|t| lr_at(t, base, warmup, total)).collect();
        prop_assert_eq!(lrs[total], 0.0);
        if warmup > 0 {
            prop_assert_eq!(lrs[0], 0.0);
        }
        prop_assert!((lrs[warmup] - base).abs() <= 1e-12 * base);
        prop_assert!(lrs[..=warmup].windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(lrs[warmup..].windows(2).all(|w| w[0] >= w[1]));
    }
}

/// AdamW on a flat vector, following the update rule term by term.
fn reference_adamw(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, lr: f64, c: &AdamWConfig<f64>) {
    for i in 0..p.len() {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        let mh = m[i] / (1.0 - c.beta1.powi(t));
        let vh = v[i] / (1.0 - c.beta2.powi(t));
        p[i] = p[i] - lr * mh / (vh.sqrt() + c.eps) - lr * c.weight_decay * p[i];
    }
}

#[test]
fn adamw_matches_reference_over_many_steps() {
    let mut r = rng(42);
    let cfg = AdamWConfig {
        beta1: 0.8,
        beta2: 0.99,
        eps: 1e-8,
        weight_decay: 0.05,
    };
    let mut params = Params::<f64>::zeros(3, 2);
    for i in 0..params.len() {
        params.set_flat(i, r.random_range(-1.0..1.0));
    }
    let mut flat = params.flat();
    let mut m = vec![0.0; flat.len()];
    let mut v = vec![0.0; flat.len()];
    let mut state = OptimizerState::new(&params);
    for t in 1..=50 {
        let mut grads = Params::zeros_like(&params);
        for i in 0..grads.len() {
            grads.set_flat(i, r.random_range(-3.0..3.0));
        }
        let lr = 0.01 * (1.0 + (t % 7) as f64);
        adamw_step(&mut state, &mut params, &grads, lr, &cfg).unwrap();
        reference_adamw(&mut flat, &mut m, &mut v, &grads.flat(), t, lr, &cfg);
        for (a, b) in params.flat().iter().zip(&flat) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "step {t}: {a} vs {b}");
        }
    }
    assert_eq!(state.step, 50);
}

#[test]
fn decay_shrinks_parameters_without_gradient() {
    let mut params = Params::<f64>::zeros(1, 0);
    params.set_flat(0, 1.0);
    let grads = Params::zeros_like(&params);
    let mut state = OptimizerState::new(&params);
    adamw_step(&mut state, &mut params, &grads, 0.1, &AdamWConfig::default()).unwrap();
    assert!((params.get_flat(0) - 0.999).abs() < 1e-15);
}
