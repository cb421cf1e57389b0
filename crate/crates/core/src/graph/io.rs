//! JSON (de)serialization of call-graph documents.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CallGraph, GraphKind, MethodId, Scope};
use crate::error::{Error, Result};

/// Result of ingesting a graph document.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub graph: CallGraph,
    /// Number of repeated `(source, target, offset)` records collapsed.
    pub duplicate_edges: usize,
}

/// Metadata block attached to pruned-graph documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningHeader {
    pub tau: f64,
    pub model: String,
    pub kept: usize,
    pub pruned: usize,
}

#[derive(Deserialize)]
struct RawDocument {
    program: String,
    kind: GraphKind,
    #[serde(default)]
    generation_time_s: Option<f64>,
    nodes: Vec<Value>,
    edges: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    uri: String,
    #[serde(default)]
    scope: Scope,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    source: String,
    target: String,
    offset: u32,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    program: &'a str,
    kind: GraphKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    generation_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pruning: Option<&'a PruningHeader>,
    nodes: &'a [MethodId],
    edges: Vec<EdgeRecord>,
}

/// Parses a call-graph JSON document.
///
/// Malformed records are reported by position (`nodes[3]`, `edges[17]`);
/// edges naming undeclared nodes are integrity errors; repeated edge
/// triples are collapsed and counted.
pub fn load_call_graph(bytes: &[u8]) -> Result<Ingested> {
    let raw: RawDocument =
        serde_json::from_slice(bytes).map_err(|e| Error::parse("document", e.to_string()))?;
    if raw.program.is_empty() {
        return Err(Error::parse("document", "`program` must be non-empty"));
    }
    if let Some(t) = raw.generation_time_s {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::parse(
                "document",
                format!("`generation_time_s` must be a non-negative number, got {t}"),
            ));
        }
    }

    let mut graph = CallGraph::new(raw.program, raw.kind).with_generation_time(raw.generation_time_s);
    for (i, v) in raw.nodes.into_iter().enumerate() {
        let rec: NodeRecord = serde_json::from_value(v)
            .map_err(|e| Error::parse(format!("nodes[{i}]"), e.to_string()))?;
        if rec.uri.is_empty() {
            return Err(Error::parse(format!("nodes[{i}]"), "empty uri"));
        }
        graph
            .add_node(rec.uri, rec.scope)
            .map_err(|e| Error::Integrity(format!("nodes[{i}]: {e}")))?;
    }

    let mut duplicate_edges = 0;
    for (i, v) in raw.edges.into_iter().enumerate() {
        let rec: EdgeRecord = serde_json::from_value(v)
            .map_err(|e| Error::parse(format!("edges[{i}]"), e.to_string()))?;
        let inserted = graph
            .add_edge(&rec.source, &rec.target, rec.offset)
            .map_err(|e| match e {
                Error::Integrity(m) => Error::Integrity(format!("edges[{i}]: {m}")),
                other => other,
            })?;
        if !inserted {
            duplicate_edges += 1;
        }
    }
    if duplicate_edges > 0 {
        log::warn!(
            "{}: collapsed {duplicate_edges} duplicate edge record(s)",
            graph.program_id()
        );
    }
    Ok(Ingested {
        graph,
        duplicate_edges,
    })
}

impl CallGraph {
    /// Writes the graph as a JSON document, optionally tagged with a pruning header.
    pub fn write_json<W: Write>(&self, writer: W, pruning: Option<&PruningHeader>) -> Result<()> {
        let doc = DocumentOut {
            program: self.program_id(),
            kind: self.kind(),
            generation_time_s: self.generation_time_s(),
            pruning,
            nodes: self.nodes(),
            edges: self
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    source: self.source_uri(e).to_owned(),
                    target: self.target_uri(e).to_owned(),
                    offset: e.offset,
                })
                .collect(),
        };
        serde_json::to_writer_pretty(writer, &doc)?;
        Ok(())
    }

    pub fn to_json_bytes(&self, pruning: Option<&PruningHeader>) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_json(&mut buf, pruning)?;
        buf.push(b'\n');
        Ok(buf)
    }
}
