//! In-memory pipeline steps shared by the subcommands and the tests.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cgprune_core::eval::{evaluate_program, grid_report, macro_average, EvalEcho, GridRow};
use cgprune_core::features::{build_features, default_entry_nodes, fnv1a64};
use cgprune_core::graph::{
    filter_stdlib_edges, label_edges, sample_large_program, CallGraph, EdgeKey, Label, LabelCounts,
    LabeledEdge,
};
use cgprune_core::learner::{train, EpochLog, MODEL_FORMAT};
use cgprune_core::pruner::{prune_graph, threshold_sweep, DecisionRule, EdgeScorer, PruneConfig, RandomClassifier};
use cgprune_core::{Error, EvalReport, FeatureSet, PrunerModel, Result, TrainConfig};

use crate::config::{FeaturesConfig, FilterConfig, ModelKind};

pub const RANDOM_FORMAT: &str = "cgprune-random-1";

/// Per-program seed for sampling, independent of program order.
pub fn program_seed(seed: u64, program: &str) -> u64 {
    seed ^ fnv1a64(program.as_bytes())
}

/// One program after filtering, labeling and sampling.
#[derive(Debug, Clone)]
pub struct PreparedProgram {
    pub static_graph: CallGraph,
    pub dynamic_graph: CallGraph,
    /// Labeled static edges, capped at the sample size.
    pub labels: Vec<LabeledEdge>,
    /// Counts before sampling.
    pub counts: LabelCounts,
}

pub fn prepare_program(
    static_g: &CallGraph,
    dynamic_g: &CallGraph,
    filter: &FilterConfig,
    seed: u64,
) -> Result<PreparedProgram> {
    let static_graph = filter_stdlib_edges(static_g, &filter.stdlib_prefixes);
    let dynamic_graph = filter_stdlib_edges(dynamic_g, &filter.stdlib_prefixes);
    let all = label_edges(&static_graph, &dynamic_graph)?;
    let counts = LabelCounts::of(&all);
    let labels = sample_large_program(&all, filter.sample_cap, program_seed(seed, static_graph.program_id()))?;
    Ok(PreparedProgram {
        static_graph,
        dynamic_graph,
        labels,
        counts,
    })
}

/// Seeded split of `ids` holding out `test_fraction` (at least one program
/// when there are two or more).
pub fn default_split(ids: &[String], test_fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut ids = ids.to_vec();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = if ids.len() < 2 {
        0
    } else {
        ((ids.len() as f64 * test_fraction).round() as usize).clamp(1, ids.len() - 1)
    };
    let mut test = ids.split_off(ids.len() - n_test);
    ids.sort();
    test.sort();
    (ids, test)
}

pub fn program_features(
    g: &CallGraph,
    cfg: &FeaturesConfig,
    embeddings: Option<&HashMap<EdgeKey, Vec<f64>>>,
) -> Result<FeatureSet> {
    build_features(g, cfg.family, &default_entry_nodes(g), embeddings, cfg.sig_dim)
}

/// Feature rows and labels of the sampled edges of several programs.
pub fn training_set(parts: &[(&[LabeledEdge], &FeatureSet)]) -> Result<(Vec<Vec<f64>>, Vec<Label>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (labels, features) in parts {
        let lookup = features.lookup();
        for l in labels.iter() {
            let key = l.key();
            let row = lookup.get(&key).ok_or_else(|| {
                Error::Integrity(format!(
                    "{}: labeled edge {} -> {} @{} has no feature row",
                    l.program, key.source, key.target, key.offset
                ))
            })?;
            xs.push(row.to_vec());
            ys.push(l.label);
        }
    }
    Ok((xs, ys))
}

/// Retain weight that balances the classes: the prune-class frequency.
pub fn balanced_w_retain(ys: &[Label]) -> f64 {
    let pos = ys.iter().filter(|y| y.is_retain()).count();
    1.0 - pos as f64 / ys.len().max(1) as f64
}

#[derive(Serialize, Deserialize)]
struct RandomDocument {
    format: String,
    seed: u64,
}

/// Either a trained classifier or the coin-flip baseline.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum ModelArtifact {
    Learned(PrunerModel),
    Random(RandomClassifier),
}

impl ModelArtifact {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        match self {
            ModelArtifact::Learned(m) => m.to_json_bytes(),
            ModelArtifact::Random(r) => {
                let mut v = serde_json::to_vec_pretty(&RandomDocument {
                    format: RANDOM_FORMAT.into(),
                    seed: r.seed,
                })?;
                v.push(b'\n');
                Ok(v)
            }
        }
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Peek {
            format: String,
        }
        let peek: Peek =
            serde_json::from_slice(bytes).map_err(|e| Error::Format {
                location: "model document".into(),
                message: e.to_string(),
            })?;
        match peek.format.as_str() {
            RANDOM_FORMAT => {
                let d: RandomDocument = serde_json::from_slice(bytes)?;
                Ok(ModelArtifact::Random(RandomClassifier { seed: d.seed }))
            }
            MODEL_FORMAT => Ok(ModelArtifact::Learned(PrunerModel::from_json_bytes(bytes)?)),
            other => Err(Error::Format {
                location: "model document".into(),
                message: format!("unknown model format `{other}`"),
            }),
        }
    }
}

impl EdgeScorer<f64> for ModelArtifact {
    fn p_retain(&self, key: &EdgeKey, features: &[f64]) -> Result<f64> {
        match self {
            ModelArtifact::Learned(m) => m.p_retain(key, features),
            ModelArtifact::Random(r) => EdgeScorer::<f64>::p_retain(r, key, features),
        }
    }

    fn id(&self) -> String {
        match self {
            ModelArtifact::Learned(m) => EdgeScorer::<f64>::id(m),
            ModelArtifact::Random(r) => EdgeScorer::<f64>::id(r),
        }
    }
}

pub struct Fitted {
    pub model: ModelArtifact,
    pub log: Vec<EpochLog<f64>>,
    pub warnings: Vec<String>,
}

pub fn fit(
    kind: ModelKind,
    xs: &[Vec<f64>],
    ys: &[Label],
    cfg: &TrainConfig,
    family: Option<cgprune_core::features::FeatureFamily>,
) -> Result<Fitted> {
    match kind {
        ModelKind::Random => Ok(Fitted {
            model: ModelArtifact::Random(RandomClassifier { seed: cfg.seed }),
            log: Vec::new(),
            warnings: Vec::new(),
        }),
        ModelKind::Learned => {
            let out = train(xs, ys, cfg, family)?;
            Ok(Fitted {
                model: ModelArtifact::Learned(out.model),
                log: out.log,
                warnings: out.warnings,
            })
        }
    }
}

/// A held-out program: filtered static graph, oracle and feature rows.
#[derive(Clone, Copy)]
pub struct TestProgram<'a> {
    pub static_graph: &'a CallGraph,
    pub dynamic_graph: &'a CallGraph,
    pub features: &'a FeatureSet,
}

/// Prunes every test program at `tau` and macro-averages the scores.
pub fn evaluate<S: EdgeScorer<f64> + ?Sized>(
    programs: &[TestProgram<'_>],
    scorer: &S,
    tau: f64,
    rule: DecisionRule,
    echo: EvalEcho,
) -> Result<EvalReport> {
    let cfg = PruneConfig {
        rule,
        ..PruneConfig::new(tau, scorer.id())?
    };
    let scores = programs
        .iter()
        .map(|p| evaluate_program(&prune_graph(p.static_graph, scorer, p.features, &cfg)?, p.dynamic_graph))
        .collect::<Result<Vec<_>>>()?;
    macro_average(&scores, echo)
}

/// Scores of the unpruned static graphs.
pub fn evaluate_unpruned(programs: &[TestProgram<'_>]) -> Result<EvalReport> {
    let scores = programs
        .iter()
        .map(|p| cgprune_core::eval::evaluate_graph(p.static_graph, p.dynamic_graph))
        .collect::<Result<Vec<_>>>()?;
    macro_average(
        &scores,
        EvalEcho {
            model: Some("unpruned".into()),
            ..EvalEcho::default()
        },
    )
}

/// Trains one model per retain weight and evaluates each at every threshold.
/// Rows are ordered by weight, then threshold.
#[allow(clippy::too_many_arguments)]
pub fn sweep_grid(
    xs: &[Vec<f64>],
    ys: &[Label],
    base: &TrainConfig,
    w1_grid: &[f64],
    tau_grid: &[f64],
    rule: DecisionRule,
    tests: &[TestProgram<'_>],
    family: Option<cgprune_core::features::FeatureFamily>,
) -> Result<Vec<GridRow<f64>>> {
    let mut taus = tau_grid.to_vec();
    taus.sort_by(f64::total_cmp);
    let cells: Vec<Vec<(f64, f64, EvalReport)>> = w1_grid
        .par_iter()
        .map(|&w1| {
            let cfg = TrainConfig {
                w_retain: w1,
                ..base.clone()
            };
            let model = train(xs, ys, &cfg, family)?.model;
            let per_program = tests
                .iter()
                .map(|p| {
                    threshold_sweep(p.static_graph, &model, p.features, &taus, rule)?
                        .into_iter()
                        .map(|(_, pg)| evaluate_program(&pg, p.dynamic_graph))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            taus.iter()
                .enumerate()
                .map(|(j, &tau)| {
                    let scores: Vec<_> = per_program.iter().map(|s| s[j].clone()).collect();
                    let echo = EvalEcho {
                        tau: Some(tau),
                        w_retain: Some(w1),
                        feature_family: family.map(|f| f.to_string()),
                        model: Some(EdgeScorer::<f64>::id(&model)),
                    };
                    Ok((w1, tau, macro_average(&scores, echo)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(grid_report(&cells.into_iter().flatten().collect::<Vec<_>>()))
}
