//! Signature hashing, structural features against naive recomputation, and
//! feature-set plumbing.

#[path = "../common/mod.rs"]
mod common;

use std::collections::{HashMap, HashSet, VecDeque};

use cgprune_core::features::{
    build_features, combine, default_entry_nodes, fnv1a64, load_semantic_embeddings, signature_feature,
    split_combined, tokenize_uri, FeatureFamily, StructuralIndex, LOOKUPS_PER_EDGE, STRUCT_DIM,
};
use cgprune_core::graph::{CallGraph, EdgeKey, GraphKind, NodeIdx};
use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{random_graph, rng};

/// Reference FNV-1a, written independently of the library.
fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

#[test]
fn fnv_published_vectors() {
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    for s in ["", "x", "getHTTPResponse", "Ljava/lang/String;"] {
        assert_eq!(fnv1a64(s.as_bytes()), fnv(s.as_bytes()));
    }
}

#[test]
fn tokens_of_a_method_uri() {
    assert_eq!(
        tokenize_uri("org/acme/HttpClient.getHTTPResponse2Code(Ljava/lang/String;I)V"),
        vec!["org", "acme", "Http", "Client", "get", "HTTP", "Response2", "Code", "Ljava", "lang", "String", "I", "V"]
    );
    assert!(tokenize_uri("//..()").is_empty());
}

#[test]
fn signature_matches_hand_built_vector() {
    let dim = 64;
    let src = "a/Foo.barBaz()V";
    let dst = "b/Qux.run()V";
    let mut want = vec![0.0f64; dim];
    for t in ["a", "Foo", "bar", "Baz", "V"] {
        want[(fnv(t.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    for t in ["b", "Qux", "run", "V"] {
        want[(fnv(format!("{t}#tgt").as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = want.iter().map(|x| x * x).sum::<f64>().sqrt();
    let got = signature_feature::<f64>(src, dst, dim).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w / norm).abs() < 1e-15);
    }
    // Caller and callee roles are distinguished.
    assert_ne!(got, signature_feature::<f64>(dst, src, dim).unwrap());
    assert!(signature_feature::<f64>(src, dst, 0).is_err());
}

/// Naive recomputation of the 11 structural features of edge `k`.
fn naive_features(g: &CallGraph, k: usize) -> [f64; STRUCT_DIM] {
    let e = g.edges()[k];
    let es = g.edges();
    let count = |f: &dyn Fn(&cgprune_core::graph::CallEdge) -> bool| es.iter().filter(|x| f(x)).count() as f64;
    let n = g.node_count();
    let adj = g.successors();

    // Shortest distance from any application node.
    let mut depth = vec![-1i64; n];
    let mut q = VecDeque::new();
    for a in default_entry_nodes(g) {
        depth[a] = 0;
        q.push_back(a);
    }
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if depth[v] < 0 {
                depth[v] = depth[u] + 1;
                q.push_back(v);
            }
        }
    }

    // Other nodes reachable from the target.
    let mut seen: HashSet<NodeIdx> = HashSet::new();
    let mut stack = adj[e.target].clone();
    while let Some(u) = stack.pop() {
        if seen.insert(u) {
            stack.extend(adj[u].iter().copied());
        }
    }
    seen.remove(&e.target);

    let m = es.len() as f64;
    let dest_in = count(&|x| x.target == e.target);
    [
        count(&|x| x.source == e.source),
        count(&|x| x.target == e.source),
        dest_in,
        count(&|x| x.source == e.target),
        count(&|x| x.source == e.source && x.offset == e.offset),
        count(&|x| x.source == e.source && x.target == e.target),
        depth[e.target] as f64,
        seen.len() as f64,
        (1.0 + n as f64).ln(),
        (1.0 + m).ln(),
        dest_in / m,
    ]
}

/// Same graph with nodes and edges inserted in a shuffled order.
fn shuffled(g: &CallGraph, seed: u64) -> CallGraph {
    let mut r = rng(seed);
    let mut nodes = g.nodes().to_vec();
    nodes.shuffle(&mut r);
    let mut edges: Vec<EdgeKey> = g.edges().iter().map(|e| g.edge_key(e)).collect();
    edges.shuffle(&mut r);
    let mut h = CallGraph::new(g.program_id(), g.kind());
    for n in nodes {
        h.add_node(n.uri, n.scope).unwrap();
    }
    for k in edges {
        h.add_edge(&k.source, &k.target, k.offset).unwrap();
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn structural_matches_naive(seed in any::<u64>(), n in 1usize..25, m in 1usize..80) {
        let g = random_graph(seed, n, m);
        let fs = build_features::<f64>(&g, FeatureFamily::Struct, &default_entry_nodes(&g), None, 16).unwrap();
        prop_assert_eq!(fs.dim(), STRUCT_DIM);
        for (k, row) in fs.rows.iter().enumerate() {
            let want = naive_features(&g, k);
            for (a, b) in row.iter().zip(want) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "edge {}: {} vs {}", k, a, b);
            }
        }
    }

    #[test]
    fn features_invariant_under_insertion_order(seed in any::<u64>(), n in 1usize..25, m in 1usize..80) {
        let g = random_graph(seed, n, m);
        let h = shuffled(&g, seed ^ 7);
        for family in [FeatureFamily::Struct, FeatureFamily::Sig, FeatureFamily::Comb] {
            let a = build_features::<f64>(&g, family, &default_entry_nodes(&g), None, 32).unwrap();
            let b = build_features::<f64>(&h, family, &default_entry_nodes(&h), None, 32).unwrap();
            let la = a.lookup();
            let lb = b.lookup();
            prop_assert_eq!(la.len(), lb.len());
            for (k, row) in la {
                prop_assert_eq!(lb[k], row);
            }
        }
    }

    #[test]
    fn extraction_cost_is_constant_per_edge(seed in any::<u64>(), n in 1usize..25, m in 0usize..80) {
        let g = random_graph(seed, n, m);
        let idx = StructuralIndex::build(&g, &default_entry_nodes(&g));
        let _ = idx.extract_all::<f64>();
        prop_assert_eq!(idx.lookups(), LOOKUPS_PER_EDGE * g.edge_count());
    }
}

#[test]
fn combined_rows_concatenate_and_fall_back() {
    let g = random_graph(3, 20, 60);
    let keys: Vec<EdgeKey> = g.edges().iter().map(|e| g.edge_key(e)).collect();
    let mut jsonl = String::new();
    for k in keys.iter().step_by(2) {
        jsonl.push_str(
            &serde_json::json!({"source": k.source, "target": k.target, "offset": k.offset, "vector": [0.5, -0.5, 0.25]})
                .to_string(),
        );
        jsonl.push('\n');
    }
    let emb: HashMap<EdgeKey, Vec<f64>> = load_semantic_embeddings(jsonl.as_bytes()).unwrap();
    let entries = default_entry_nodes(&g);
    let st = build_features::<f64>(&g, FeatureFamily::Struct, &entries, None, 8).unwrap();
    let comb = build_features::<f64>(&g, FeatureFamily::Comb, &entries, Some(&emb), 8).unwrap();
    assert_eq!(comb.dim(), STRUCT_DIM + 3);
    assert_eq!(comb.fallbacks, keys.len() / 2);
    for (i, (k, row)) in comb.keys.iter().zip(&comb.rows).enumerate() {
        let (s, sem) = split_combined(row, STRUCT_DIM);
        assert_eq!(s, st.rows[i].as_slice());
        let want = match emb.get(k) {
            Some(v) => v.clone(),
            None => signature_feature(&k.source, &k.target, 3).unwrap(),
        };
        assert_eq!(sem, want.as_slice());
        assert_eq!(combine(s, sem), *row);
    }
}

#[test]
fn csv_dump_round_trips() {
    let g = random_graph(9, 15, 40);
    for family in [FeatureFamily::Struct, FeatureFamily::Sig] {
        let fs = build_features::<f64>(&g, family, &default_entry_nodes(&g), None, 24).unwrap();
        let mut buf = Vec::new();
        fs.write_csv(&mut buf).unwrap();
        let back = cgprune_core::features::FeatureSet::<f64>::read_csv(family, buf.as_slice()).unwrap();
        assert_eq!(back.keys, fs.keys);
        assert_eq!(back.rows, fs.rows);
    }
}

#[test]
fn embedding_errors() {
    let ragged = "{\"source\":\"a\",\"target\":\"b\",\"offset\":0,\"vector\":[1.0]}\n{\"source\":\"a\",\"target\":\"c\",\"offset\":0,\"vector\":[1.0,2.0]}";
    assert!(load_semantic_embeddings::<f64>(ragged.as_bytes()).is_err());
    let dup = "{\"source\":\"a\",\"target\":\"b\",\"offset\":0,\"vector\":[1.0]}\n{\"source\":\"a\",\"target\":\"b\",\"offset\":0,\"vector\":[2.0]}";
    assert!(load_semantic_embeddings::<f64>(dup.as_bytes()).is_err());
}

#[test]
fn unreached_targets_have_negative_depth() {
    let mut g = CallGraph::new("p", GraphKind::Static0Cfa);
    g.add_node("lib/A.f()V", Default::default()).unwrap();
    g.add_node("lib/B.g()V", Default::default()).unwrap();
    g.add_edge("lib/A.f()V", "lib/B.g()V", 0).unwrap();
    let fs = build_features::<f64>(&g, FeatureFamily::Struct, &default_entry_nodes(&g), None, 8).unwrap();
    assert_eq!(fs.rows[0][6], -1.0);
}
