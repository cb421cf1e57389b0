use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_gradients, Dropout};
use super::model::PrunerModel;
use super::optim::{adamw_step, lr_at, OptimizerState};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::features::FeatureFamily;
use crate::graph::Label;
use crate::Scalar;

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpochLog<T> {
    pub epoch: usize,
    pub mean_loss: T,
    pub lr_last: T,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: PrunerModel<T>,
    pub log: Vec<EpochLog<T>>,
    pub warnings: Vec<String>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Per-column mean and population standard deviation; constant columns get std 1.
fn standardization<T: Scalar, X: AsRef<[T]>>(xs: &[X], d: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_count(xs.len());
    let mut mean = vec![T::zero(); d];
    for x in xs {
        for (m, &v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![T::zero(); d];
    for x in xs {
        for ((s, &v), &m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > T::lit(1e-12) && sd.is_finite() {
                sd
            } else {
                T::one()
            }
        })
        .collect();
    (mean, std)
}

/// Trains a classifier on `(xs, ys)`.
///
/// Everything random (initialization, per-epoch shuffle, dropout masks) is
/// drawn from separate ChaCha streams derived from `cfg.seed`, so the result
/// is bit-identical across runs. The schedule spans
/// `epochs × ceil(N / batch_size)` optimizer steps.
pub fn train<T: Scalar, X: AsRef<[T]>>(
    xs: &[X],
    ys: &[Label],
    cfg: &TrainConfig<T>,
    family: Option<FeatureFamily>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if xs.is_empty() {
        return Err(Error::usage("no training samples"));
    }
    if xs.len() != ys.len() {
        return Err(Error::usage(format!("{} samples but {} labels", xs.len(), ys.len())));
    }
    let d = xs[0].as_ref().len();
    if d == 0 {
        return Err(Error::usage("feature vectors are empty"));
    }
    if let Some(i) = xs.iter().position(|x| x.as_ref().len() != d) {
        return Err(Error::usage(format!(
            "sample {i} has {} features, expected {d}",
            xs[i].as_ref().len()
        )));
    }
    if let Some(i) = xs.iter().position(|x| x.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::numeric("input", format!("sample {i} has a non-finite feature")));
    }

    let mut warnings = Vec::new();
    let positives = ys.iter().filter(|&&y| y == Label::Retain).count();
    if positives == 0 || positives == ys.len() {
        let missing = if positives == 0 { "retain" } else { "prune" };
        let msg = format!("training data has no `{missing}` samples; the model sees a single class");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let n = xs.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut warmup = cfg.warmup_steps;
    if warmup > total_steps {
        let msg = format!(
            "warmup of {warmup} steps exceeds the {total_steps} scheduled steps; clamped"
        );
        log::warn!("{msg}");
        warnings.push(msg);
        warmup = total_steps;
    }

    let mut model = PrunerModel::init(d, cfg.hidden_dim, &mut rng(cfg.seed, INIT_STREAM));
    let (mean, std) = standardization(xs, d);
    model.feature_mean = mean;
    model.feature_std = std;
    model.seed = cfg.seed;
    model.feature_family = family;
    model.config = Some(cfg.clone());

    let weights = cfg.class_weights();
    let adam = cfg.adamw();
    let rate = cfg.dropout_rate.to_f64_lossy();
    let mut state = OptimizerState::new(&model.params);
    let mut shuffle_rng = rng(cfg.seed, SHUFFLE_STREAM);
    let mut dropout_rng = rng(cfg.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = T::zero();
        let mut lr = T::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<&[T]> = chunk.iter().map(|&i| xs[i].as_ref()).collect();
            let by: Vec<Label> = chunk.iter().map(|&i| ys[i]).collect();
            let dropout = Some(Dropout {
                rate,
                rng: &mut dropout_rng,
            });
            let (loss, grads) = loss_and_gradients(&model, &bx, &by, weights, dropout)?;
            if !loss.is_finite() {
                return Err(Error::numeric("loss", format!("non-finite loss in epoch {epoch}")));
            }
            loss_sum += loss * T::from_count(chunk.len());
            lr = lr_at(step, cfg.learning_rate, warmup, total_steps);
            adamw_step(&mut state, &mut model.params, &grads, lr, &adam)?;
            step += 1;
        }
        let mean_loss = loss_sum / T::from_count(n);
        log::debug!("epoch {epoch}: mean loss {mean_loss}, lr {lr}");
        log.push(EpochLog {
            epoch,
            mean_loss,
            lr_last: lr,
        });
    }
    Ok(TrainOutcome {
        model,
        log,
        warnings,
    })
}

/// Training log CSV with columns `epoch,mean_loss,lr_last`.
pub fn write_training_log<T: Scalar, W: Write>(log: &[EpochLog<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in log {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_training_log<T: Scalar, R: Read>(r: R) -> Result<Vec<EpochLog<T>>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}
