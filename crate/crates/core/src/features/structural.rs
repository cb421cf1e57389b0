//! Structural edge features computed from the static call graph.
//!
//! All per-graph quantities are gathered once into a [`StructuralIndex`];
//! extracting the feature vector of one edge then costs a constant number of
//! lookups.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};

use fixedbitset::FixedBitSet;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{CallEdge, CallGraph, NodeIdx};
use crate::Scalar;

pub const STRUCT_DIM: usize = 11;

pub const STRUCTURAL_FEATURE_NAMES: [&str; STRUCT_DIM] = [
    "src_out_degree",
    "src_in_degree",
    "dest_in_degree",
    "dest_out_degree",
    "site_fanout",
    "pair_offsets",
    "dest_depth",
    "dest_reachable",
    "log_nodes",
    "log_edges",
    "dest_in_share",
];

/// Hash-map probes performed per extracted edge.
pub const LOOKUPS_PER_EDGE: usize = 3;

pub struct StructuralIndex<'g> {
    graph: &'g CallGraph,
    out_degree: Vec<u32>,
    in_degree: Vec<u32>,
    site_fanout: HashMap<(NodeIdx, u32), u32>,
    pair_offsets: HashMap<(NodeIdx, NodeIdx), u32>,
    depth: Vec<i64>,
    reachable: Vec<u32>,
    lookups: AtomicUsize,
}

/// Application-scope nodes, the default entry set for depth features.
pub fn default_entry_nodes(g: &CallGraph) -> Vec<NodeIdx> {
    g.application_nodes().collect()
}

impl<'g> StructuralIndex<'g> {
    pub fn build(graph: &'g CallGraph, entry_nodes: &[NodeIdx]) -> Self {
        let n = graph.node_count();
        let mut out_degree = vec![0u32; n];
        let mut in_degree = vec![0u32; n];
        let mut site_fanout = HashMap::new();
        let mut pair_offsets = HashMap::new();
        for e in graph.edges() {
            out_degree[e.source] += 1;
            in_degree[e.target] += 1;
            *site_fanout.entry((e.source, e.offset)).or_insert(0) += 1;
            // Edge triples are unique, so each (pair, offset) is counted once.
            *pair_offsets.entry((e.source, e.target)).or_insert(0) += 1;
        }
        let succ = graph.successors();
        StructuralIndex {
            graph,
            out_degree,
            in_degree,
            site_fanout,
            pair_offsets,
            depth: bfs_depths(&succ, entry_nodes),
            reachable: reachable_counts(graph),
            lookups: AtomicUsize::new(0),
        }
    }

    pub fn graph(&self) -> &'g CallGraph {
        self.graph
    }

    /// Total hash-map probes made by [`StructuralIndex::features`] so far.
    pub fn lookups(&self) -> usize {
        self.lookups.load(Ordering::Relaxed)
    }

    pub fn features<T: Scalar>(&self, e: &CallEdge) -> Result<[T; STRUCT_DIM]> {
        self.lookups.fetch_add(LOOKUPS_PER_EDGE, Ordering::Relaxed);
        if !self.graph.contains_edge(e) {
            return Err(Error::usage(format!(
                "edge {:?} is not part of graph `{}`",
                e,
                self.graph.program_id()
            )));
        }
        let fanout = self.site_fanout[&(e.source, e.offset)];
        let offsets = self.pair_offsets[&(e.source, e.target)];
        let n_nodes = self.graph.node_count() as f64;
        let n_edges = self.graph.edge_count() as f64;
        let c = |v: u32| T::from_count(v as usize);
        Ok([
            c(self.out_degree[e.source]),
            c(self.in_degree[e.source]),
            c(self.in_degree[e.target]),
            c(self.out_degree[e.target]),
            c(fanout),
            c(offsets),
            T::lit(self.depth[e.target] as f64),
            c(self.reachable[e.target]),
            T::lit((1.0 + n_nodes).ln()),
            T::lit((1.0 + n_edges).ln()),
            T::lit(self.in_degree[e.target] as f64 / n_edges),
        ])
    }

    /// Feature vectors of every edge, in graph edge order.
    pub fn extract_all<T: Scalar>(&self) -> Vec<[T; STRUCT_DIM]> {
        self.graph
            .edges()
            .par_iter()
            .map(|e| self.features(e).expect("edge belongs to graph"))
            .collect()
    }
}

/// Structural features of a single edge. Builds a throwaway index; use
/// [`StructuralIndex`] when extracting many edges of one graph.
pub fn extract_structural<T: Scalar>(
    g: &CallGraph,
    e: &CallEdge,
    entry_nodes: &[NodeIdx],
) -> Result<[T; STRUCT_DIM]> {
    StructuralIndex::build(g, entry_nodes).features(e)
}

fn bfs_depths(succ: &[Vec<NodeIdx>], entries: &[NodeIdx]) -> Vec<i64> {
    let mut depth = vec![-1i64; succ.len()];
    let mut queue = VecDeque::new();
    for &s in entries {
        if depth[s] < 0 {
            depth[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if depth[v] < 0 {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }
    depth
}

/// Number of nodes reachable from each node by a non-empty path, not
/// counting the node itself. Computed on the SCC condensation with one
/// bitset per component.
fn reachable_counts(g: &CallGraph) -> Vec<u32> {
    let n = g.node_count();
    let mut pg: DiGraph<(), ()> = DiGraph::with_capacity(n, g.edge_count());
    for _ in 0..n {
        pg.add_node(());
    }
    for e in g.edges() {
        pg.update_edge(NodeIndex::new(e.source), NodeIndex::new(e.target), ());
    }
    // Components come out in reverse topological order: successors first.
    let sccs = petgraph::algo::tarjan_scc(&pg);
    let mut comp = vec![0usize; n];
    for (ci, members) in sccs.iter().enumerate() {
        for v in members {
            comp[v.index()] = ci;
        }
    }
    let mut closure: Vec<FixedBitSet> = Vec::with_capacity(sccs.len());
    for (ci, members) in sccs.iter().enumerate() {
        let mut bits = FixedBitSet::with_capacity(n);
        for v in members {
            bits.insert(v.index());
        }
        for v in members {
            for w in pg.neighbors(*v) {
                let cw = comp[w.index()];
                if cw != ci {
                    bits.union_with(&closure[cw]);
                }
            }
        }
        closure.push(bits);
    }
    (0..n)
        .map(|v| (closure[comp[v]].count_ones(..) - 1) as u32)
        .collect()
}
