//! The numeric core runs in `f32` as well as `f64`.

#[path = "../common/mod.rs"]
mod common;

use cgprune_core::eval::{evaluate_program, f_beta, ProgramScore};
use cgprune_core::features::{build_features, default_entry_nodes, FeatureFamily};
use cgprune_core::graph::{label_edges, Label};
use cgprune_core::learner::{softmax2, train, weighted_ce_loss, PrunerModel, TrainConfig};
use cgprune_core::pruner::{prune_graph, PruneConfig};

use common::{random_dynamic, random_graph};

#[test]
fn f32_pipeline_tracks_f64() {
    let g = random_graph(31, 40, 200);
    let d = random_dynamic(&g, 32, 0.3, 0);
    let labels = label_edges(&g, &d).unwrap();
    let entries = default_entry_nodes(&g);
    let f64s = build_features::<f64>(&g, FeatureFamily::Comb, &entries, None, 16).unwrap();
    let f32s = build_features::<f32>(&g, FeatureFamily::Comb, &entries, None, 16).unwrap();
    for (a, b) in f64s.rows.iter().zip(&f32s.rows) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - *y as f64).abs() <= 1e-5 * x.abs().max(1.0));
        }
    }
    let ys: Vec<Label> = labels.iter().map(|l| l.label).collect();
    let cfg32 = TrainConfig::<f32> {
        learning_rate: 0.01,
        epochs: 3,
        batch_size: 16,
        dropout_rate: 0.0,
        ..TrainConfig::default()
    };
    let cfg64 = TrainConfig::<f64> {
        learning_rate: 0.01,
        epochs: 3,
        batch_size: 16,
        dropout_rate: 0.0,
        ..TrainConfig::default()
    };
    let m32: PrunerModel<f32> = train(&f32s.rows, &ys, &cfg32, None).unwrap().model;
    let m64: PrunerModel<f64> = train(&f64s.rows, &ys, &cfg64, None).unwrap().model;
    // Same weights, narrower arithmetic.
    let narrowed = PrunerModel::<f32>::from_json_bytes(&m64.to_json_bytes().unwrap()).unwrap();
    for (x32, x64) in f32s.rows.iter().zip(&f64s.rows) {
        let (p32, p64) = (narrowed.predict(x32).unwrap(), m64.predict(x64).unwrap());
        assert!((p32 as f64 - p64).abs() < 1e-4, "{p32} vs {p64}");
        let p = m32.predict(x32).unwrap();
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }
    let pg = prune_graph(&g, &m32, &f32s, &PruneConfig::new(0.6f32, "m32").unwrap()).unwrap();
    let s: ProgramScore<f32> = evaluate_program(&pg, &d).unwrap();
    assert!((0.0..=1.0).contains(&s.precision) && (0.0..=1.0).contains(&s.recall));
}

#[test]
fn f32_primitives() {
    let (p0, p1) = softmax2(1.0f32, -1.0f32);
    assert!((p0 + p1 - 1.0).abs() < 1e-6);
    let l = weighted_ce_loss(&[Label::Retain], &[0.5f32], 0.95, 0.05).unwrap();
    assert!((l - 0.95 * std::f32::consts::LN_2).abs() < 1e-6);
    assert!((f_beta(0.39f32, 0.95, 2.0) - 0.73805).abs() < 1e-4);
    let m = PrunerModel::<f32>::zeros(2, 3);
    let back = PrunerModel::<f32>::from_json_bytes(&m.to_json_bytes().unwrap()).unwrap();
    assert_eq!(back, m);
}
