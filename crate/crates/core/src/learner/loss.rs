//! Class-weighted binary cross-entropy and its gradients.

use rand::Rng;

use super::model::{Params, PrunerModel};
use crate::error::{Error, Result};
use crate::graph::Label;
use crate::Scalar;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Loss weights of the retain (positive) and prune (negative) classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights<T> {
    pub retain: T,
    pub prune: T,
}

impl<T: Scalar> ClassWeights<T> {
    /// `w_retain` for the positive class and `1 - w_retain` for the negative one.
    pub fn from_retain(w_retain: T) -> Self {
        ClassWeights {
            retain: w_retain,
            prune: T::one() - w_retain,
        }
    }
}

/// Two-class softmax with max subtraction.
pub fn softmax2<T: Scalar>(z0: T, z1: T) -> (T, T) {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

fn sample_loss<T: Scalar>(y: Label, p1: T, w: ClassWeights<T>) -> T {
    let p = clamp_prob(p1);
    match y {
        Label::Retain => -w.retain * p.ln(),
        Label::Prune => -w.prune * (T::one() - p).ln(),
    }
}

/// `L = -(1/N) Σ [w1·y·log p1 + w2·(1-y)·log(1-p1)]`.
pub fn weighted_ce_loss<T: Scalar>(y: &[Label], p1: &[T], w1: T, w2: T) -> Result<T> {
    if y.is_empty() {
        return Err(Error::usage("loss over an empty batch"));
    }
    if y.len() != p1.len() {
        return Err(Error::usage(format!(
            "{} labels but {} probabilities",
            y.len(),
            p1.len()
        )));
    }
    let w = ClassWeights {
        retain: w1,
        prune: w2,
    };
    let total: T = y.iter().zip(p1).map(|(&yi, &pi)| sample_loss(yi, pi, w)).sum();
    Ok(total / T::from_count(y.len()))
}

/// Mean weighted loss of the model over a batch, without dropout.
pub fn batch_loss<T: Scalar, X: AsRef<[T]>>(
    model: &PrunerModel<T>,
    xs: &[X],
    ys: &[Label],
    w: ClassWeights<T>,
) -> Result<T> {
    let p1 = xs
        .iter()
        .map(|x| model.predict(x.as_ref()))
        .collect::<Result<Vec<T>>>()?;
    weighted_ce_loss(ys, &p1, w.retain, w.prune)
}

/// Inverted dropout on the classifier input.
pub struct Dropout<'r, R> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Mean batch loss and its analytic gradient with respect to every parameter.
///
/// With dropout, one keep/drop mask per input entry is drawn from the given
/// RNG and kept entries are scaled by `1 / (1 - rate)`.
pub fn loss_and_gradients<T: Scalar, X: AsRef<[T]>, R: Rng>(
    model: &PrunerModel<T>,
    xs: &[X],
    ys: &[Label],
    w: ClassWeights<T>,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<(T, Params<T>)> {
    if xs.is_empty() {
        return Err(Error::usage("gradient over an empty batch"));
    }
    if xs.len() != ys.len() {
        return Err(Error::usage(format!(
            "{} samples but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let n = T::from_count(xs.len());
    let d = model.input_dim;
    let h = model.hidden_dim;
    let eps = T::lit(PROB_EPS);
    let mut grads = Params::zeros_like(&model.params);
    let mut total = T::zero();

    for (x, &y) in xs.iter().zip(ys) {
        let x = x.as_ref();
        model.check_dim(x)?;
        let mut input = model.standardize(x);
        if let Some(dr) = dropout.as_mut() {
            if dr.rate > 0.0 {
                let keep_scale = T::lit(1.0 / (1.0 - dr.rate));
                for v in &mut input {
                    if dr.rng.random::<f64>() < dr.rate {
                        *v = T::zero();
                    } else {
                        *v *= keep_scale;
                    }
                }
            }
        }
        let fw = model.forward_std(input);
        let [z0, z1] = fw.scores;
        if !(z0.is_finite() && z1.is_finite()) {
            let block = model.params.first_non_finite().unwrap_or("output scores");
            return Err(Error::numeric(block, "non-finite activation"));
        }
        let (p0, p1) = softmax2(z0, z1);
        total += sample_loss(y, p1, w);

        // dL/d(z1 - z0); zero where the clamp is active.
        let inside = p1 >= eps && p1 <= T::one() - eps;
        let g_delta = if !inside {
            T::zero()
        } else {
            match y {
                Label::Retain => -w.retain * p0,
                Label::Prune => w.prune * p1,
            }
        } / n;
        let dz = [-g_delta, g_delta];

        let feats: &[T] = if h == 0 { &fw.input } else { &fw.hidden };
        let m = feats.len();
        for (c, &dzc) in dz.iter().enumerate() {
            for (j, &a) in feats.iter().enumerate() {
                grads.w_out[c * m + j] += dzc * a;
            }
            grads.b_out[c] += dzc;
        }
        if h > 0 {
            for (j, &a) in fw.hidden.iter().enumerate() {
                let da = dz[0] * model.params.w_out[j] + dz[1] * model.params.w_out[m + j];
                let dpre = da * (T::one() - a * a);
                for (i, &xi) in fw.input.iter().enumerate() {
                    grads.w_hidden[j * d + i] += dpre * xi;
                }
                grads.b_hidden[j] += dpre;
            }
        }
    }
    if let Some(block) = grads.first_non_finite() {
        return Err(Error::numeric(block, "non-finite gradient"));
    }
    Ok((total / n, grads))
}
