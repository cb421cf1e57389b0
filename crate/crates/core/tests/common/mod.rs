//! Random fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashSet;

use cgprune_core::graph::{CallGraph, GraphKind, Scope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Namespaces used for generated URIs. `javafx/` and `sunny/` look like
/// stdlib prefixes but must survive filtering.
pub const NAMESPACES: [&str; 9] = ["app/", "lib/", "java/", "javax/", "sun/", "com/sun/", "jdk/", "javafx/", "sunny/"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` nodes over all namespaces and up to `m` distinct random edges.
pub fn random_graph(seed: u64, n: usize, m: usize) -> CallGraph {
    let mut r = rng(seed);
    let mut g = CallGraph::new("fixture", GraphKind::Static0Cfa);
    let uris: Vec<String> = (0..n)
        .map(|i| {
            let ns = NAMESPACES[r.random_range(0..NAMESPACES.len())];
            format!("{ns}C{}.m{i}()V", i % 5)
        })
        .collect();
    for u in &uris {
        let scope = if u.starts_with("app/") {
            Scope::Application
        } else {
            Scope::Dependency
        };
        g.add_node(u.clone(), scope).unwrap();
    }
    if n == 0 {
        return g;
    }
    for _ in 0..m {
        let s = r.random_range(0..n);
        let t = r.random_range(0..n);
        g.add_edge(&uris[s], &uris[t], r.random_range(0..4)).unwrap();
    }
    g
}

/// Graph over `n` plain nodes whose first `apps` nodes are application scope.
pub fn random_digraph(seed: u64, n: usize, apps: usize, density: f64) -> CallGraph {
    let mut r = rng(seed);
    let mut g = CallGraph::new("fixture", GraphKind::Static0Cfa);
    for i in 0..n {
        let scope = if i < apps {
            Scope::Application
        } else {
            Scope::Dependency
        };
        g.add_node(format!("n/N{i}.m()V"), scope).unwrap();
    }
    for s in 0..n {
        for t in 0..n {
            if r.random_bool(density) {
                g.add_edge(&format!("n/N{s}.m()V"), &format!("n/N{t}.m()V"), 0).unwrap();
            }
        }
    }
    g
}

/// Dynamic graph sharing the nodes of `g`: each static pair is observed with
/// probability `keep` (at a random offset), plus a few pairs absent from `g`.
pub fn random_dynamic(g: &CallGraph, seed: u64, keep: f64, extra: usize) -> CallGraph {
    let mut r = rng(seed);
    let mut d = CallGraph::new(g.program_id(), GraphKind::Dynamic);
    for node in g.nodes() {
        d.add_node(node.uri.clone(), node.scope).unwrap();
    }
    for e in g.edges() {
        if r.random_bool(keep) {
            d.add_edge(g.source_uri(e), g.target_uri(e), r.random_range(0..9)).unwrap();
        }
    }
    let n = g.node_count();
    if n > 0 {
        for _ in 0..extra {
            let s = &g.node(r.random_range(0..n)).uri;
            let t = &g.node(r.random_range(0..n)).uri;
            d.add_edge(s, t, 100).unwrap();
        }
    }
    d
}

/// Offset-insensitive pairs by brute force over the edge list.
pub fn pairs(g: &CallGraph) -> HashSet<(String, String)> {
    g.edges()
        .iter()
        .map(|e| (g.source_uri(e).to_owned(), g.target_uri(e).to_owned()))
        .collect()
}
