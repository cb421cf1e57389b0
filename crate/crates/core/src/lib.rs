//! Learned pruning of static call graphs.
//!
//! Static call graphs over-approximate the calls a program can make. This
//! crate labels static edges against dynamically observed calls, extracts
//! per-edge features, trains a class-weighted binary edge classifier, prunes
//! graphs under a confidence threshold and evaluates the result, both with
//! precision/recall/F-scores and with a vulnerability-reachability client.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod client;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod learner;
pub mod pruner;
mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PrunerModel = learner::PrunerModel<f64>;
pub type TrainConfig = learner::TrainConfig<f64>;
pub type FeatureSet = features::FeatureSet<f64>;
pub type PrunedGraph<'g> = pruner::PrunedGraph<'g, f64>;
pub type ProgramScore = eval::ProgramScore<f64>;
pub type EvalReport = eval::EvalReport<f64>;
