//! Confidence-gated pruning of static call graphs and threshold sweeps.

use std::collections::HashSet;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{fnv1a64, FeatureSet};
use crate::graph::{CallEdge, CallGraph, EdgeKey, PruningHeader};
use crate::learner::PrunerModel;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Retain,
    Prune,
}

/// How `tau` gates a decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Prune iff the prune probability `1 - p_retain` exceeds `tau`. A higher
    /// `tau` prunes less.
    #[default]
    PruneConfidence,
    /// Retain iff `p_retain > tau`, otherwise prune.
    RetainThreshold,
}

/// Decision under the default rule. Ties retain.
pub fn decide<T: Scalar>(p_retain: T, tau: T) -> Decision {
    decide_with(DecisionRule::PruneConfidence, p_retain, tau)
}

pub fn decide_with<T: Scalar>(rule: DecisionRule, p_retain: T, tau: T) -> Decision {
    let prune = match rule {
        DecisionRule::PruneConfidence => T::one() - p_retain > tau,
        DecisionRule::RetainThreshold => p_retain <= tau,
    };
    if prune {
        Decision::Prune
    } else {
        Decision::Retain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PruneConfig<T> {
    pub tau: T,
    pub model_ref: String,
    #[serde(default)]
    pub rule: DecisionRule,
}

impl<T: Scalar> PruneConfig<T> {
    pub fn new(tau: T, model_ref: impl Into<String>) -> Result<Self> {
        let cfg = PruneConfig {
            tau,
            model_ref: model_ref.into(),
            rule: DecisionRule::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_tau(self.tau)
    }
}

fn validate_tau<T: Scalar>(tau: T) -> Result<()> {
    if tau >= T::lit(0.5) && tau <= T::one() {
        Ok(())
    } else {
        Err(Error::usage(format!("tau {tau} outside [0.5, 1]")))
    }
}

/// Anything that assigns a retain probability to an edge.
pub trait EdgeScorer<T>: Sync {
    fn p_retain(&self, key: &EdgeKey, features: &[T]) -> Result<T>;

    /// Short identifier recorded in pruned-graph headers.
    fn id(&self) -> String;
}

impl<T: Scalar> EdgeScorer<T> for PrunerModel<T> {
    fn p_retain(&self, _key: &EdgeKey, features: &[T]) -> Result<T> {
        self.predict(features)
    }

    fn id(&self) -> String {
        let family = self.feature_family.map_or("any".to_owned(), |f| f.to_string());
        match &self.config {
            Some(c) => format!("{family}-h{}-w{}-s{}", self.hidden_dim, c.w_retain, self.seed),
            None => format!("{family}-h{}-s{}", self.hidden_dim, self.seed),
        }
    }
}

/// Baseline that retains or prunes each edge with probability 1/2.
///
/// `p_retain` is uniform in `[0, 1)`, derived from a hash of the seed and the
/// edge key, so repeated runs agree and the features are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomClassifier {
    pub seed: u64,
}

impl RandomClassifier {
    pub fn p_for(&self, key: &EdgeKey) -> f64 {
        let mut buf = Vec::with_capacity(key.source.len() + key.target.len() + 24);
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(key.source.as_bytes());
        buf.push(0);
        buf.extend_from_slice(key.target.as_bytes());
        buf.push(0);
        buf.extend_from_slice(&key.offset.to_le_bytes());
        // Final avalanche so nearby keys do not share high bits.
        let mut h = fnv1a64(&buf);
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl<T: Scalar> EdgeScorer<T> for RandomClassifier {
    fn p_retain(&self, key: &EdgeKey, _features: &[T]) -> Result<T> {
        Ok(T::lit(self.p_for(key)))
    }

    fn id(&self) -> String {
        format!("random-s{}", self.seed)
    }
}

/// Wraps a scorer and counts how many predictions it serves.
pub struct CountingScorer<'s, S> {
    pub inner: &'s S,
    calls: AtomicUsize,
}

impl<'s, S> CountingScorer<'s, S> {
    pub fn new(inner: &'s S) -> Self {
        CountingScorer {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<T, S: EdgeScorer<T>> EdgeScorer<T> for CountingScorer<'_, S> {
    fn p_retain(&self, key: &EdgeKey, features: &[T]) -> Result<T> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.p_retain(key, features)
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

/// Retain probabilities for every edge of a graph, computed once.
#[derive(Debug, Clone)]
pub struct ScoredEdges<'g, T> {
    pub base: &'g CallGraph,
    pub model_ref: String,
    /// Aligned with `base.edges()`; `None` where no feature row was available.
    pub p_retain: Vec<Option<T>>,
}

impl<'g, T: Scalar> ScoredEdges<'g, T> {
    pub fn missing_features(&self) -> usize {
        self.p_retain.iter().filter(|p| p.is_none()).count()
    }

    pub fn apply(&self, tau: T, rule: DecisionRule) -> Result<PrunedGraph<'g, T>> {
        validate_tau(tau)?;
        let kept = self
            .p_retain
            .iter()
            .map(|p| p.is_none_or(|p| decide_with(rule, p, tau) == Decision::Retain))
            .collect();
        Ok(PrunedGraph {
            base: self.base,
            tau,
            model_ref: self.model_ref.clone(),
            kept,
            p_retain: self.p_retain.clone(),
            missing_features: self.missing_features(),
        })
    }
}

/// Scores every edge of `g`. Edges without a feature row get no score and
/// are later retained; each one is logged.
pub fn score_edges<'g, T: Scalar, S: EdgeScorer<T> + ?Sized>(
    g: &'g CallGraph,
    scorer: &S,
    features: &FeatureSet<T>,
) -> Result<ScoredEdges<'g, T>> {
    let lookup = features.lookup();
    let keys: Vec<EdgeKey> = g.edges().iter().map(|e| g.edge_key(e)).collect();
    let p_retain = keys
        .par_iter()
        .map(|k| match lookup.get(k) {
            Some(row) => scorer.p_retain(k, row).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<Option<T>>>>()?;
    for (k, p) in keys.iter().zip(&p_retain) {
        if p.is_none() {
            log::warn!(
                "{}: no features for edge {} -> {} @{}; retained",
                g.program_id(),
                k.source,
                k.target,
                k.offset
            );
        }
    }
    Ok(ScoredEdges {
        base: g,
        model_ref: scorer.id(),
        p_retain,
    })
}

/// A static graph with a subset of its edges kept. The node set is unchanged.
#[derive(Debug, Clone)]
pub struct PrunedGraph<'g, T> {
    pub base: &'g CallGraph,
    pub tau: T,
    pub model_ref: String,
    /// Aligned with `base.edges()`.
    pub kept: Vec<bool>,
    pub p_retain: Vec<Option<T>>,
    /// Edges retained only because they had no feature row.
    pub missing_features: usize,
}

impl<'g, T: Scalar> PrunedGraph<'g, T> {
    pub fn kept_edges(&self) -> impl Iterator<Item = &'g CallEdge> + '_ {
        self.base
            .edges()
            .iter()
            .zip(&self.kept)
            .filter(|(_, &k)| k)
            .map(|(e, _)| e)
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.kept.len() - self.kept_count()
    }

    /// Offset-insensitive pairs of the kept edges.
    pub fn pair_set(&self) -> HashSet<(&'g str, &'g str)> {
        let base = self.base;
        self.kept_edges()
            .map(|e| (base.source_uri(e), base.target_uri(e)))
            .collect()
    }

    pub fn to_graph(&self) -> CallGraph {
        let mut flags = self.kept.iter();
        self.base.retain_edges(|_| *flags.next().expect("aligned flags"))
    }

    pub fn header(&self) -> PruningHeader {
        PruningHeader {
            tau: self.tau.to_f64_lossy(),
            model: self.model_ref.clone(),
            kept: self.kept_count(),
            pruned: self.pruned_count(),
        }
    }

    /// Pruned graph document: the base format plus a `pruning` block.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        self.to_graph().write_json(w, Some(&self.header()))
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        self.to_graph().to_json_bytes(Some(&self.header()))
    }
}

/// Edge-probability dump: `source,target,offset,p_retain`; unscored edges
/// have an empty probability.
pub fn write_probabilities_csv<T: Scalar, W: Write>(scored: &ScoredEdges<'_, T>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["source", "target", "offset", "p_retain"])?;
    let g = scored.base;
    for (e, p) in g.edges().iter().zip(&scored.p_retain) {
        wtr.write_record([
            g.source_uri(e),
            g.target_uri(e),
            &e.offset.to_string(),
            &p.map_or(String::new(), |p| p.to_string()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn prune_graph<'g, T: Scalar, S: EdgeScorer<T> + ?Sized>(
    g: &'g CallGraph,
    scorer: &S,
    features: &FeatureSet<T>,
    cfg: &PruneConfig<T>,
) -> Result<PrunedGraph<'g, T>> {
    cfg.validate()?;
    let mut scored = score_edges(g, scorer, features)?;
    scored.model_ref = cfg.model_ref.clone();
    scored.apply(cfg.tau, cfg.rule)
}

/// Prunes `g` at every threshold in `taus` (ascending), scoring each edge once.
pub fn threshold_sweep<'g, T: Scalar, S: EdgeScorer<T> + ?Sized>(
    g: &'g CallGraph,
    scorer: &S,
    features: &FeatureSet<T>,
    taus: &[T],
    rule: DecisionRule,
) -> Result<Vec<(T, PrunedGraph<'g, T>)>> {
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::usage("thresholds must be sorted ascending"));
    }
    for &t in taus {
        validate_tau(t)?;
    }
    let scored = score_edges(g, scorer, features)?;
    taus.iter()
        .map(|&t| Ok((t, scored.apply(t, rule)?)))
        .collect()
}
