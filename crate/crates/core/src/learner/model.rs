use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::softmax2;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::features::FeatureFamily;
use crate::Scalar;

pub const MODEL_FORMAT: &str = "cgprune-model-1";

/// Trainable parameters, stored row-major.
///
/// With `hidden_dim = h > 0` the network is `z = W_out · tanh(W_hid · x + b_hid) + b_out`;
/// with `h = 0` it is the logistic model `z = W_out · x + b_out`. `z` has two
/// entries: the prune score `z0` and the retain score `z1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Params<T> {
    /// `h × d`
    pub w_hidden: Vec<T>,
    pub b_hidden: Vec<T>,
    /// `2 × h`, or `2 × d` when there is no hidden layer.
    pub w_out: Vec<T>,
    pub b_out: Vec<T>,
}

pub(crate) const BLOCK_NAMES: [&str; 4] = ["w_hidden", "b_hidden", "w_out", "b_out"];

impl<T: Scalar> Params<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let m = if hidden_dim == 0 { input_dim } else { hidden_dim };
        Params {
            w_hidden: vec![T::zero(); hidden_dim * input_dim],
            b_hidden: vec![T::zero(); hidden_dim],
            w_out: vec![T::zero(); 2 * m],
            b_out: vec![T::zero(); 2],
        }
    }

    pub fn zeros_like(other: &Params<T>) -> Self {
        Params {
            w_hidden: vec![T::zero(); other.w_hidden.len()],
            b_hidden: vec![T::zero(); other.b_hidden.len()],
            w_out: vec![T::zero(); other.w_out.len()],
            b_out: vec![T::zero(); other.b_out.len()],
        }
    }

    pub fn blocks(&self) -> [&[T]; 4] {
        [&self.w_hidden, &self.b_hidden, &self.w_out, &self.b_out]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<T>; 4] {
        [
            &mut self.w_hidden,
            &mut self.b_hidden,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params<T>) -> bool {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .all(|(a, b)| a.len() == b.len())
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.blocks()
            .iter()
            .zip(BLOCK_NAMES)
            .find(|(b, _)| b.iter().any(|x| !x.is_finite()))
            .map(|(_, n)| n)
    }

    pub fn flat(&self) -> Vec<T> {
        self.blocks().concat()
    }

    pub fn get_flat(&self, mut i: usize) -> T {
        for b in self.blocks() {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, v: T) {
        for b in self.blocks_mut() {
            if i < b.len() {
                b[i] = v;
                return;
            }
            i -= b.len();
        }
        panic!("parameter index out of range")
    }
}

/// Weighted binary edge classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PrunerModel<T> {
    pub format: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Per-feature standardization applied before the network: `(x - mean) / std`.
    pub feature_mean: Vec<T>,
    pub feature_std: Vec<T>,
    pub params: Params<T>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_family: Option<FeatureFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig<T>>,
}

/// Intermediate values of one forward pass.
pub(crate) struct Forward<T> {
    pub input: Vec<T>,
    pub hidden: Vec<T>,
    pub scores: [T; 2],
}

impl<T: Scalar> PrunerModel<T> {
    /// All-zero model with identity standardization. Predicts 0.5 everywhere.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        PrunerModel {
            format: MODEL_FORMAT.to_owned(),
            input_dim,
            hidden_dim,
            feature_mean: vec![T::zero(); input_dim],
            feature_std: vec![T::one(); input_dim],
            params: Params::zeros(input_dim, hidden_dim),
            seed: 0,
            feature_family: None,
            config: None,
        }
    }

    /// Xavier-uniform hidden weights; zero biases. The logistic model starts
    /// at zero.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim);
        let mut xavier = |fan_in: usize, fan_out: usize, w: &mut [T]| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in w {
                *x = T::lit(rng.random_range(-a..a));
            }
        };
        if hidden_dim > 0 {
            xavier(input_dim, hidden_dim, &mut m.params.w_hidden);
            xavier(hidden_dim, 2, &mut m.params.w_out);
        }
        m
    }

    pub(crate) fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::usage(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    /// Runs the network on an already standardized (and possibly dropped-out) input.
    pub(crate) fn forward_std(&self, input: Vec<T>) -> Forward<T> {
        let p = &self.params;
        let d = self.input_dim;
        let hidden: Vec<T> = (0..self.hidden_dim)
            .map(|j| {
                let row = &p.w_hidden[j * d..(j + 1) * d];
                let pre = row.iter().zip(&input).map(|(&w, &x)| w * x).sum::<T>() + p.b_hidden[j];
                pre.tanh()
            })
            .collect();
        let feats: &[T] = if self.hidden_dim == 0 { &input } else { &hidden };
        let m = feats.len();
        let score = |c: usize| {
            p.w_out[c * m..(c + 1) * m]
                .iter()
                .zip(feats)
                .map(|(&w, &a)| w * a)
                .sum::<T>()
                + p.b_out[c]
        };
        let scores = [score(0), score(1)];
        Forward {
            input,
            hidden,
            scores,
        }
    }

    /// Raw class scores `(z0, z1)` at inference (no dropout).
    pub fn scores(&self, x: &[T]) -> Result<[T; 2]> {
        self.check_dim(x)?;
        Ok(self.forward_std(self.standardize(x)).scores)
    }

    /// Probability that the edge should be retained.
    pub fn predict(&self, x: &[T]) -> Result<T> {
        let [z0, z1] = self.scores(x)?;
        Ok(softmax2(z0, z1).1)
    }

    pub fn predict_batch<X: AsRef<[T]> + Sync>(&self, xs: &[X]) -> Result<Vec<T>> {
        xs.par_iter().map(|x| self.predict(x.as_ref())).collect()
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let m: PrunerModel<T> =
            serde_json::from_slice(bytes).map_err(|e| Error::parse("model file", e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(Error::parse(
                "model file",
                format!("unsupported format `{}`", m.format),
            ));
        }
        let expected = Params::<T>::zeros(m.input_dim, m.hidden_dim);
        if !m.params.same_shape(&expected)
            || m.feature_mean.len() != m.input_dim
            || m.feature_std.len() != m.input_dim
        {
            return Err(Error::parse("model file", "parameter shapes do not match dimensions"));
        }
        if let Some(block) = m.params.first_non_finite() {
            return Err(Error::numeric(block, "non-finite parameter in model file"));
        }
        Ok(m)
    }
}
