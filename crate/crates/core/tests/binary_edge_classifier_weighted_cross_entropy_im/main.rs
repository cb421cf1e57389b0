//! Two-way softmax and the class-weighted cross-entropy.

use cgprune_core::graph::Label;
use cgprune_core::learner::{softmax2, weighted_ce_loss, ClassWeights, PROB_EPS};
use proptest::prelude::*;

fn label(b: bool) -> Label {
    if b {
        Label::Retain
    } else {
        Label::Prune
    }
}

/// Plain binary cross-entropy computed directly.
fn bce(ys: &[bool], ps: &[f64]) -> f64 {
    let n = ys.len() as f64;
    -ys.iter()
        .zip(ps)
        .map(|(&y, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

fn batch() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| (prop::collection::vec(any::<bool>(), n), prop::collection::vec(0.0f64..=1.0, n)))
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z0 in -800.0f64..800.0, z1 in -800.0f64..800.0) {
        let (p0, p1) = softmax2(z0, z1);
        prop_assert!(p0.is_finite() && p1.is_finite());
        prop_assert!((0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1));
        prop_assert!((p0 + p1 - 1.0).abs() <= 2.0 * f64::EPSILON);
        prop_assert_eq!(p1 >= p0, z1 >= z0);
        let (q0, q1) = softmax2(z0 + 3.5, z1 + 3.5);
        prop_assert!((q0 - p0).abs() < 1e-12 && (q1 - p1).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_halve_plain_bce((ys, ps) in batch()) {
        let labels: Vec<Label> = ys.iter().map(|&b| label(b)).collect();
        let l = weighted_ce_loss(&labels, &ps, 0.5, 0.5).unwrap();
        let want = 0.5 * bce(&ys, &ps);
        prop_assert!((l - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn loss_is_linear_in_the_weights((ys, ps) in batch(), w1 in 0.0f64..=1.0) {
        let labels: Vec<Label> = ys.iter().map(|&b| label(b)).collect();
        let w = ClassWeights::from_retain(w1);
        let l = weighted_ce_loss(&labels, &ps, w.retain, w.prune).unwrap();
        let pos = weighted_ce_loss(&labels, &ps, 1.0, 0.0).unwrap();
        let neg = weighted_ce_loss(&labels, &ps, 0.0, 1.0).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
        prop_assert!((l - (w1 * pos + (1.0 - w1) * neg)).abs() <= 1e-12 * l.max(1.0));
    }
}

#[test]
fn clamp_keeps_confident_mistakes_finite() {
    let l = weighted_ce_loss(&[Label::Retain, Label::Prune], &[0.0, 1.0], 0.5, 0.5).unwrap();
    let hi = 1.0 - PROB_EPS;
    let want = 0.5 * (-0.5 * PROB_EPS.ln() - 0.5 * (1.0 - hi).ln());
    assert!((l - want).abs() < 1e-12);
    let perfect = weighted_ce_loss(&[Label::Retain, Label::Prune], &[1.0, 0.0], 0.5, 0.5).unwrap();
    assert!((0.0..1e-11).contains(&perfect));
}

#[test]
fn reference_values() {
    let l = weighted_ce_loss(&[Label::Retain], &[0.5], 0.95, 0.05).unwrap();
    assert!((l - 0.95 * std::f64::consts::LN_2).abs() < 1e-15);
    let l = weighted_ce_loss(&[Label::Prune], &[0.5], 0.95, 0.05).unwrap();
    assert!((l - 0.05 * std::f64::consts::LN_2).abs() < 1e-15);
    assert!((l - 0.034657).abs() < 1e-6);
}

#[test]
fn shape_errors() {
    assert!(weighted_ce_loss::<f64>(&[], &[], 0.5, 0.5).is_err());
    assert!(weighted_ce_loss(&[Label::Retain], &[0.5, 0.5], 0.5, 0.5).is_err());
}
