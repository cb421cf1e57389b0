//! Threshold pruning: decision rules, nesting across thresholds, fail-safe
//! retention and single scoring per sweep.

#[path = "../common/mod.rs"]
mod common;

use cgprune_core::eval::evaluate_program;
use cgprune_core::features::{build_features, default_entry_nodes, FeatureFamily};
use cgprune_core::graph::load_call_graph;
use cgprune_core::learner::PrunerModel;
use cgprune_core::pruner::{
    decide, decide_with, prune_graph, score_edges, threshold_sweep, write_probabilities_csv, CountingScorer, Decision,
    DecisionRule, PruneConfig, RandomClassifier,
};
use cgprune_core::{Error, FeatureSet, ProgramScore};
use proptest::prelude::*;
use rand::Rng;

use common::{random_dynamic, random_graph, rng};

const TAUS: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 0.95];

fn random_model(seed: u64, d: usize, hidden: usize) -> PrunerModel<f64> {
    let mut r = rng(seed);
    let mut m = PrunerModel::zeros(d, hidden);
    for i in 0..m.params.len() {
        m.params.set_flat(i, r.random_range(-4.0..4.0));
    }
    m
}

fn fixture(seed: u64) -> (cgprune_core::graph::CallGraph, FeatureSet) {
    let g = random_graph(seed, 30, 120);
    let fs = build_features(&g, FeatureFamily::Sig, &default_entry_nodes(&g), None, 16).unwrap();
    (g, fs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn kept_sets_nest_and_recall_grows(seed in any::<u64>(), hidden in 0usize..4) {
        let (g, fs) = fixture(seed);
        let d = random_dynamic(&g, seed ^ 3, 0.3, 3);
        let m = random_model(seed ^ 5, fs.dim(), hidden);
        let sweep = threshold_sweep(&g, &m, &fs, &TAUS, DecisionRule::PruneConfidence).unwrap();
        let scores: Vec<ProgramScore> = sweep.iter().map(|(_, pg)| evaluate_program(pg, &d).unwrap()).collect();
        for w in sweep.windows(2) {
            for (lo, hi) in w[0].1.kept.iter().zip(&w[1].1.kept) {
                prop_assert!(!lo || *hi);
            }
        }
        for w in scores.windows(2) {
            prop_assert!(w[0].recall <= w[1].recall);
        }
        // The retain-threshold rule nests the other way.
        let rev = threshold_sweep(&g, &m, &fs, &TAUS, DecisionRule::RetainThreshold).unwrap();
        for w in rev.windows(2) {
            for (lo, hi) in w[0].1.kept.iter().zip(&w[1].1.kept) {
                prop_assert!(!hi || *lo);
            }
        }
    }

    #[test]
    fn decisions_follow_the_rule(p in 0.0f64..=1.0, tau in 0.5f64..=1.0) {
        prop_assert_eq!(decide(p, tau) == Decision::Prune, 1.0 - p > tau);
        prop_assert_eq!(decide_with(DecisionRule::RetainThreshold, p, tau) == Decision::Prune, p <= tau);
    }
}

#[test]
fn ties_retain() {
    assert_eq!(decide(0.25, 0.75), Decision::Retain);
    assert_eq!(decide(0.0, 1.0), Decision::Retain);
    assert_eq!(decide(0.0, 0.5), Decision::Prune);
}

#[test]
fn sweep_scores_each_edge_once() {
    let (g, fs) = fixture(1);
    let m = random_model(2, fs.dim(), 2);
    let counting = CountingScorer::new(&m);
    let sweep = threshold_sweep(&g, &counting, &fs, &TAUS, DecisionRule::PruneConfidence).unwrap();
    assert_eq!(sweep.len(), TAUS.len());
    assert_eq!(counting.calls(), g.edge_count());
    assert!(threshold_sweep(&g, &m, &fs, &[0.9, 0.6], DecisionRule::PruneConfidence).is_err());
    assert!(threshold_sweep(&g, &m, &fs, &[0.4], DecisionRule::PruneConfidence).is_err());
}

#[test]
fn missing_features_are_kept() {
    let (g, mut fs) = fixture(4);
    let dropped = fs.keys.len() / 3;
    fs.keys.truncate(fs.keys.len() - dropped);
    fs.rows.truncate(fs.rows.len() - dropped);
    // A model that prunes everything it sees.
    let mut m = PrunerModel::<f64>::zeros(fs.dim(), 0);
    m.params.b_out[0] = 50.0;
    let pg = prune_graph(&g, &m, &fs, &PruneConfig::new(0.5, "all").unwrap()).unwrap();
    assert_eq!(pg.missing_features, dropped);
    assert_eq!(pg.kept_count(), dropped);
    assert!(pg.kept.iter().skip(g.edge_count() - dropped).all(|&k| k));
}

#[test]
fn pruned_document_keeps_nodes() {
    let (g, fs) = fixture(8);
    let pg = prune_graph(&g, &RandomClassifier { seed: 1 }, &fs, &PruneConfig::new(0.5, "coin").unwrap()).unwrap();
    let back = load_call_graph(&pg.to_json_bytes().unwrap()).unwrap().graph;
    assert_eq!(back.nodes(), g.nodes());
    assert_eq!(back.edge_count(), pg.kept_count());
    assert_eq!(pg.kept_count() + pg.pruned_count(), g.edge_count());
    let text = String::from_utf8(pg.to_json_bytes().unwrap()).unwrap();
    assert!(text.contains("\"pruning\""));
    assert!(text.contains("\"model\": \"coin\""));
}

#[test]
fn coin_flip_is_fair_and_stable() {
    let g = random_graph(21, 200, 4000);
    let fs = build_features(&g, FeatureFamily::Sig, &default_entry_nodes(&g), None, 4).unwrap();
    let coin = RandomClassifier { seed: 9 };
    let pg = prune_graph(&g, &coin, &fs, &PruneConfig::new(0.5, "coin").unwrap()).unwrap();
    let frac = pg.kept_count() as f64 / g.edge_count() as f64;
    assert!((frac - 0.5).abs() < 0.05, "kept fraction {frac}");
    let again = prune_graph(&g, &coin, &fs, &PruneConfig::new(0.5, "coin").unwrap()).unwrap();
    assert_eq!(pg.kept, again.kept);
}

#[test]
fn probability_dump() {
    let (g, fs) = fixture(3);
    let m = random_model(3, fs.dim(), 0);
    let scored = score_edges(&g, &m, &fs).unwrap();
    let mut buf = Vec::new();
    write_probabilities_csv(&scored, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), g.edge_count() + 1);
    assert!(text.starts_with("source,target,offset,p_retain"));
}

#[test]
fn tau_out_of_range() {
    assert!(matches!(PruneConfig::new(0.49, "m"), Err(Error::Usage(_))));
    assert!(matches!(PruneConfig::new(1.01, "m"), Err(Error::Usage(_))));
}
