//! Graph documents, stdlib filtering, labeling and sampling.

#[path = "../common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashSet};

use cgprune_core::graph::{
    filter_stdlib_edges, label_edges, load_call_graph, pr_ratio, read_labeled_jsonl, sample_large_program,
    write_labeled_jsonl, CallGraph, DatasetManifest, GraphKind, Label, LabelCounts, DEFAULT_STDLIB_PREFIXES,
};
use cgprune_core::Error;
use proptest::prelude::*;

use common::{pairs, random_dynamic, random_graph};

fn touches_stdlib(uri: &str) -> bool {
    ["java/", "javax/", "sun/", "com/sun/", "jdk/"].iter().any(|p| uri.starts_with(p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn document_round_trip(seed in any::<u64>(), n in 0usize..40, m in 0usize..120) {
        let g = random_graph(seed, n, m).with_generation_time(Some(1.25));
        let back = load_call_graph(&g.to_json_bytes(None).unwrap()).unwrap();
        prop_assert_eq!(back.duplicate_edges, 0);
        prop_assert_eq!(back.graph, g);
    }

    #[test]
    fn filter_removes_exactly_stdlib_edges(seed in any::<u64>(), n in 1usize..40, m in 0usize..150) {
        let g = random_graph(seed, n, m);
        let f = filter_stdlib_edges(&g, &DEFAULT_STDLIB_PREFIXES);
        let expected: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| !touches_stdlib(g.source_uri(e)) && !touches_stdlib(g.target_uri(e)))
            .copied()
            .collect();
        prop_assert_eq!(f.edges(), expected.as_slice());
        prop_assert_eq!(f.nodes(), g.nodes());
        let again = filter_stdlib_edges(&f, &DEFAULT_STDLIB_PREFIXES);
        prop_assert_eq!(again, f);
    }

    #[test]
    fn labels_partition_static_edges(seed in any::<u64>(), n in 1usize..30, m in 0usize..100, keep in 0.0f64..1.0) {
        let s = random_graph(seed, n, m);
        let d = random_dynamic(&s, seed ^ 1, keep, 5);
        let labels = label_edges(&s, &d).unwrap();
        prop_assert_eq!(labels.len(), s.edge_count());
        let observed = pairs(&d);
        for (l, e) in labels.iter().zip(s.edges()) {
            prop_assert_eq!(&l.source, s.source_uri(e));
            prop_assert_eq!(l.offset, e.offset);
            let hit = observed.contains(&(l.source.clone(), l.target.clone()));
            prop_assert_eq!(l.label == Label::Retain, hit);
        }
        let c = LabelCounts::of(&labels);
        prop_assert_eq!(c.retain + c.prune, s.edge_count());
    }

    #[test]
    fn sampling_keeps_positives_and_caps(seed in any::<u64>(), m in 1usize..200, cap in 1usize..150, keep in 0.0f64..0.5) {
        let s = random_graph(seed, 30, m);
        let d = random_dynamic(&s, seed ^ 2, keep, 0);
        let labels = label_edges(&s, &d).unwrap();
        let sampled = sample_large_program(&labels, cap, seed).unwrap();
        let c = LabelCounts::of(&labels);
        prop_assert_eq!(sampled.len(), labels.len().min(cap.max(c.retain)));
        prop_assert_eq!(LabelCounts::of(&sampled).retain, c.retain);
        // Order-preserving subsequence of the input.
        let mut it = labels.iter();
        for e in &sampled {
            prop_assert!(it.any(|x| x == e));
        }
        prop_assert_eq!(sample_large_program(&labels, cap, seed).unwrap(), sampled);
    }
}

#[test]
fn offsets_ignored_when_matching() {
    let s = random_graph(5, 20, 60);
    let mut d = CallGraph::new("fixture", GraphKind::Dynamic);
    for node in s.nodes() {
        d.add_node(node.uri.clone(), node.scope).unwrap();
    }
    let e = s.edges()[0];
    d.add_edge(s.source_uri(&e), s.target_uri(&e), e.offset + 1000).unwrap();
    let labels = label_edges(&s, &d).unwrap();
    let retained: HashSet<_> = labels.iter().filter(|l| l.label.is_retain()).map(|l| (l.source.clone(), l.target.clone())).collect();
    assert_eq!(retained.len(), 1);
    assert!(retained.contains(&(s.source_uri(&e).to_owned(), s.target_uri(&e).to_owned())));
}

#[test]
fn every_default_prefix_filtered() {
    let mut g = CallGraph::new("p", GraphKind::Static0Cfa);
    let app = "app/Main.run()V";
    g.add_node(app, Default::default()).unwrap();
    let others = [
        "java/util/List.add()Z",
        "javax/net/Socket.open()V",
        "sun/misc/Unsafe.get()I",
        "com/sun/net/Http.get()V",
        "jdk/internal/Misc.f()V",
        "javafx/Stage.show()V",
        "com/sunrise/A.b()V",
        "lib/Util.f()V",
    ];
    for u in others {
        g.add_node(u, Default::default()).unwrap();
        g.add_edge(app, u, 0).unwrap();
        g.add_edge(u, app, 1).unwrap();
    }
    let f = filter_stdlib_edges(&g, &DEFAULT_STDLIB_PREFIXES);
    assert_eq!(f.edge_count(), 6);
    assert!(f.edges().iter().all(|e| !touches_stdlib(f.source_uri(e)) && !touches_stdlib(f.target_uri(e))));
}

#[test]
fn duplicates_collapsed_and_errors_located() {
    let doc = br#"{"program":"p","kind":"static_0cfa",
        "nodes":[{"uri":"a/A.f()V","scope":"application"},{"uri":"a/B.g()V"}],
        "edges":[{"source":"a/A.f()V","target":"a/B.g()V","offset":1},
                 {"source":"a/A.f()V","target":"a/B.g()V","offset":1},
                 {"source":"a/A.f()V","target":"a/B.g()V","offset":2}]}"#;
    let ing = load_call_graph(doc).unwrap();
    assert_eq!(ing.duplicate_edges, 1);
    assert_eq!(ing.graph.edge_count(), 2);

    let bad = br#"{"program":"p","kind":"dynamic","nodes":[{"uri":"a/A.f()V"}],
        "edges":[{"source":"a/A.f()V","target":"a/A.f()V","offset":0},{"source":"a/A.f()V","offset":0}]}"#;
    match load_call_graph(bad) {
        Err(Error::Parse { record, .. }) => assert_eq!(record, "edges[1]"),
        other => panic!("expected parse error, got {other:?}"),
    }

    let dangling = br#"{"program":"p","kind":"dynamic","nodes":[],
        "edges":[{"source":"x/X.f()V","target":"x/Y.g()V","offset":0}]}"#;
    assert!(matches!(load_call_graph(dangling), Err(Error::Integrity(_))));
}

#[test]
fn labeled_jsonl_round_trip_and_ratio() {
    let s = random_graph(11, 25, 90);
    let d = random_dynamic(&s, 12, 0.3, 2);
    let labels = label_edges(&s, &d).unwrap();
    let mut buf = Vec::new();
    write_labeled_jsonl(&mut buf, &labels).unwrap();
    let back = read_labeled_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, labels);
    let c = LabelCounts::of(&back);
    assert_eq!(pr_ratio(&back).unwrap(), c.prune as f64 / c.retain as f64);
}

#[test]
fn combined_manifest_is_additive() {
    let mut parts = Vec::new();
    for (k, name) in ["x", "y", "z"].iter().enumerate() {
        let mut counts = BTreeMap::new();
        for i in 0..3 {
            counts.insert(
                format!("{name}-{i}"),
                LabelCounts {
                    retain: 2 + i + k,
                    prune: 20 * (i + 1),
                },
            );
        }
        let ids: Vec<String> = counts.keys().cloned().collect();
        parts.push(DatasetManifest::new(*name, ids[..2].to_vec(), ids[2..].to_vec(), counts).unwrap());
    }
    let all = DatasetManifest::combine("all", &parts).unwrap();
    let sum = parts.iter().fold((0, 0), |(r, p), m| {
        let t = m.totals();
        (r + t.retain, p + t.prune)
    });
    assert_eq!((all.totals().retain, all.totals().prune), sum);
    assert_eq!(all.pr_ratio, sum.1 as f64 / sum.0 as f64);
    assert_eq!(all.train_programs.len(), 6);
    assert!(DatasetManifest::combine("dup", &[parts[0].clone(), parts[0].clone()]).is_err());
}

#[test]
fn kind_and_program_checked() {
    let s = random_graph(1, 10, 20);
    let not_dynamic = s.clone();
    assert!(matches!(label_edges(&s, &not_dynamic), Err(Error::Usage(_))));
    let other = CallGraph::new("other", GraphKind::Dynamic);
    assert!(matches!(label_edges(&s, &other), Err(Error::Usage(_))));
}
