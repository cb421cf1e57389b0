//! Call-graph data model.
//!
//! A [`CallGraph`] is a directed multigraph: nodes are methods identified by
//! their URI, edges are call sites `(source, target, offset)`. Two edges may
//! connect the same pair of methods from different call sites, but a given
//! triple appears at most once.

mod io;
mod label;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_call_graph, Ingested, PruningHeader};
pub use label::{
    filter_stdlib_edges, label_edges, pr_ratio, read_labeled_jsonl, sample_large_program,
    write_labeled_jsonl, DatasetManifest, Label, LabelCounts, LabeledEdge, DEFAULT_SAMPLE_CAP,
    DEFAULT_STDLIB_PREFIXES,
};

/// Whether a method belongs to the analysed program or to one of its dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Application,
    #[default]
    Dependency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphKind {
    #[serde(rename = "static_0cfa")]
    Static0Cfa,
    #[serde(rename = "static_1cfa")]
    Static1Cfa,
    #[serde(rename = "dynamic")]
    Dynamic,
}

impl GraphKind {
    pub fn is_static(self) -> bool {
        !matches!(self, GraphKind::Dynamic)
    }
}

/// A method node, e.g. `org/acme/Parser.parse(Ljava/lang/String;)V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodId {
    pub uri: String,
    #[serde(default)]
    pub scope: Scope,
}

/// Index of a node inside its owning [`CallGraph`].
pub type NodeIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CallEdge {
    pub source: NodeIdx,
    pub target: NodeIdx,
    /// Call-site index within the caller.
    pub offset: u32,
}

/// Graph-independent identity of an edge, by URIs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub source: String,
    pub target: String,
    pub offset: u32,
}

impl EdgeKey {
    pub fn new(source: impl Into<String>, target: impl Into<String>, offset: u32) -> Self {
        EdgeKey {
            source: source.into(),
            target: target.into(),
            offset,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CallGraph {
    program_id: String,
    kind: GraphKind,
    generation_time_s: Option<f64>,
    nodes: Vec<MethodId>,
    node_index: HashMap<String, NodeIdx>,
    edges: Vec<CallEdge>,
    edge_set: HashSet<CallEdge>,
}

impl PartialEq for CallGraph {
    fn eq(&self, other: &Self) -> bool {
        self.program_id == other.program_id
            && self.kind == other.kind
            && self.generation_time_s == other.generation_time_s
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl CallGraph {
    pub fn new(program_id: impl Into<String>, kind: GraphKind) -> Self {
        CallGraph {
            program_id: program_id.into(),
            kind,
            generation_time_s: None,
            nodes: Vec::new(),
            node_index: HashMap::new(),
            edges: Vec::new(),
            edge_set: HashSet::new(),
        }
    }

    pub fn with_generation_time(mut self, seconds: Option<f64>) -> Self {
        self.generation_time_s = seconds;
        self
    }

    pub fn program_id(&self) -> &str {
        &self.program_id
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn generation_time_s(&self) -> Option<f64> {
        self.generation_time_s
    }

    pub fn nodes(&self) -> &[MethodId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[CallEdge] {
        &self.edges
    }

    pub fn node(&self, idx: NodeIdx) -> &MethodId {
        &self.nodes[idx]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_idx(&self, uri: &str) -> Option<NodeIdx> {
        self.node_index.get(uri).copied()
    }

    /// Adds a node. Re-adding a URI is an integrity error since scopes are
    /// fixed at ingestion.
    pub fn add_node(&mut self, uri: impl Into<String>, scope: Scope) -> Result<NodeIdx> {
        let uri = uri.into();
        if uri.is_empty() {
            return Err(Error::Integrity("node uri must be non-empty".into()));
        }
        if self.node_index.contains_key(&uri) {
            return Err(Error::Integrity(format!("duplicate node uri `{uri}`")));
        }
        let idx = self.nodes.len();
        self.node_index.insert(uri.clone(), idx);
        self.nodes.push(MethodId { uri, scope });
        Ok(idx)
    }

    /// Adds an edge between two existing nodes. Returns `false` when the
    /// `(source, target, offset)` triple was already present.
    pub fn add_edge(&mut self, source: &str, target: &str, offset: u32) -> Result<bool> {
        let s = self
            .node_idx(source)
            .ok_or_else(|| Error::Integrity(format!("edge source `{source}` is not a node")))?;
        let t = self
            .node_idx(target)
            .ok_or_else(|| Error::Integrity(format!("edge target `{target}` is not a node")))?;
        Ok(self.insert_edge(CallEdge {
            source: s,
            target: t,
            offset,
        }))
    }

    fn insert_edge(&mut self, e: CallEdge) -> bool {
        if self.edge_set.insert(e) {
            self.edges.push(e);
            true
        } else {
            false
        }
    }

    pub fn contains_edge(&self, e: &CallEdge) -> bool {
        self.edge_set.contains(e)
    }

    /// Looks up an edge by URIs.
    pub fn find_edge(&self, key: &EdgeKey) -> Option<CallEdge> {
        let e = CallEdge {
            source: self.node_idx(&key.source)?,
            target: self.node_idx(&key.target)?,
            offset: key.offset,
        };
        self.contains_edge(&e).then_some(e)
    }

    pub fn edge_key(&self, e: &CallEdge) -> EdgeKey {
        EdgeKey::new(
            self.nodes[e.source].uri.clone(),
            self.nodes[e.target].uri.clone(),
            e.offset,
        )
    }

    pub fn source_uri(&self, e: &CallEdge) -> &str {
        &self.nodes[e.source].uri
    }

    pub fn target_uri(&self, e: &CallEdge) -> &str {
        &self.nodes[e.target].uri
    }

    /// Offset-insensitive `(source uri, target uri)` pairs of all edges.
    pub fn pair_set(&self) -> HashSet<(&str, &str)> {
        self.edges
            .iter()
            .map(|e| (self.source_uri(e), self.target_uri(e)))
            .collect()
    }

    /// A graph with the same nodes and the edges for which `keep` holds, in
    /// the original order.
    pub fn retain_edges(&self, mut keep: impl FnMut(&CallEdge) -> bool) -> CallGraph {
        let edges: Vec<CallEdge> = self.edges.iter().copied().filter(|e| keep(e)).collect();
        CallGraph {
            program_id: self.program_id.clone(),
            kind: self.kind,
            generation_time_s: self.generation_time_s,
            nodes: self.nodes.clone(),
            node_index: self.node_index.clone(),
            edge_set: edges.iter().copied().collect(),
            edges,
        }
    }

    /// Outgoing adjacency lists, indexed by node.
    pub fn successors(&self) -> Vec<Vec<NodeIdx>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.source].push(e.target);
        }
        adj
    }

    pub fn application_nodes(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.scope == Scope::Application)
            .map(|(i, _)| i)
    }
}
