//! Vulnerability reachability against a transitive-closure oracle.

#[path = "../common/mod.rs"]
mod common;

use cgprune_core::client::{cg_size_stats, mark_vulnerable, reachability, timed_analysis, write_vuln_csv, VulnConfig};
use cgprune_core::graph::{CallGraph, NodeIdx, Scope};
use cgprune_core::Error;
use proptest::prelude::*;
use rand::Rng;

use common::{random_digraph, rng};

/// Reflexive transitive closure by Floyd–Warshall.
fn closure(g: &CallGraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut c = vec![vec![false; n]; n];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = true;
    }
    for e in g.edges() {
        c[e.source][e.target] = true;
    }
    for k in 0..n {
        let via = c[k].clone();
        for row in c.iter_mut().filter(|row| row[k]) {
            for (cell, &v) in row.iter_mut().zip(&via) {
                *cell |= v;
            }
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pair_counts_equal_closure(seed in any::<u64>(), n in 1usize..=50, density in 0.0f64..0.15) {
        let mut r = rng(seed ^ 0xabc);
        let apps = r.random_range(0..=n.min(8));
        let g = random_digraph(seed, n, apps, density);
        let vulns: Vec<NodeIdx> = (0..n).filter(|_| r.random_bool(0.3)).collect();
        let c = closure(&g);
        let app_nodes: Vec<NodeIdx> = g.application_nodes().collect();
        let pairs = app_nodes.iter().map(|&a| vulns.iter().filter(|&&v| c[a][v]).count()).sum::<usize>();
        let reached = vulns.iter().filter(|&&v| app_nodes.iter().any(|&a| c[a][v])).count();
        let got = reachability(&g, &vulns);
        prop_assert_eq!(got.reachable_paths, pairs);
        prop_assert_eq!(got.reached, reached);
        let frac = if vulns.is_empty() { 0.0 } else { reached as f64 / vulns.len() as f64 };
        prop_assert_eq!(got.reachable_node_fraction, frac);
    }

    #[test]
    fn size_stats_by_counting(seed in any::<u64>(), n in 1usize..40) {
        let g = random_digraph(seed, n, 2, 0.05);
        let active = (0..n)
            .filter(|&v| g.edges().iter().any(|e| e.source == v || e.target == v))
            .count();
        prop_assert_eq!(cg_size_stats(&g), (g.edge_count(), active));
    }
}

#[test]
fn marking_is_seeded_and_scoped() {
    let g = random_digraph(3, 40, 10, 0.1);
    let cfg = VulnConfig {
        k: 12,
        seed: 8,
        ..VulnConfig::default()
    };
    let a = mark_vulnerable(&g, &cfg).unwrap();
    assert_eq!(a, mark_vulnerable(&g, &cfg).unwrap());
    assert_eq!(a.len(), 12);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert!(a.iter().all(|&v| g.node(v).scope == Scope::Dependency));
    let other = mark_vulnerable(&g, &VulnConfig { seed: 9, ..cfg.clone() }).unwrap();
    assert_ne!(a, other);
    let too_many = VulnConfig { k: 31, ..cfg };
    assert!(matches!(mark_vulnerable(&g, &too_many), Err(Error::Usage(_))));
}

#[test]
fn pruning_never_adds_reachability() {
    let g = random_digraph(17, 50, 6, 0.08);
    let cfg = VulnConfig {
        k: 20,
        seed: 1,
        warmup_runs: 1,
        measured_runs: 2,
    };
    let vulns = mark_vulnerable(&g, &cfg).unwrap();
    let mut flip = rng(2);
    let pruned = g.retain_edges(|_| flip.random_bool(0.6));
    let before = timed_analysis(&g, &vulns, &cfg, None).unwrap();
    let after = timed_analysis(&pruned, &vulns, &cfg, Some(0.9)).unwrap();
    assert!(after.reachable_paths <= before.reachable_paths);
    assert!(after.reachable_node_fraction <= before.reachable_node_fraction);
    assert!(after.edges <= before.edges);
    assert!(before.time_ms_mean >= 0.0 && before.time_ms_std >= 0.0);

    let mut buf = Vec::new();
    write_vuln_csv(&[before, after], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains(",unpruned,"));
}
