//! Vulnerability-propagation client: seeded vulnerable dependency methods,
//! BFS reachability from application code, and warmed-up timings.

use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MeanStd;
use crate::graph::{CallGraph, NodeIdx, Scope};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VulnConfig {
    pub k: usize,
    pub seed: u64,
    pub warmup_runs: usize,
    pub measured_runs: usize,
}

impl Default for VulnConfig {
    fn default() -> Self {
        VulnConfig {
            k: 100,
            seed: 0,
            warmup_runs: 3,
            measured_runs: 3,
        }
    }
}

impl VulnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::usage("vulnerable method count k must be positive"));
        }
        if self.measured_runs == 0 {
            return Err(Error::usage("measured_runs must be positive"));
        }
        Ok(())
    }
}

/// Picks `cfg.k` dependency-scope nodes uniformly at random, returned in
/// ascending index order. Pruned variants share the node set of their base
/// graph, so they receive the same marks.
pub fn mark_vulnerable(g: &CallGraph, cfg: &VulnConfig) -> Result<Vec<NodeIdx>> {
    cfg.validate()?;
    let candidates: Vec<NodeIdx> = g
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.scope == Scope::Dependency)
        .map(|(i, _)| i)
        .collect();
    if candidates.len() < cfg.k {
        return Err(Error::usage(format!(
            "{}: cannot mark {} vulnerable methods, only {} dependency methods exist",
            g.program_id(),
            cfg.k,
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked: Vec<NodeIdx> = rand::seq::index::sample(&mut rng, candidates.len(), cfg.k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    /// Reachable (application node, vulnerable node) pairs.
    pub reachable_paths: usize,
    /// Vulnerable nodes reachable from at least one application node.
    pub reached: usize,
    pub reachable_node_fraction: f64,
}

/// Runs one BFS per application node over directed edges. An application
/// node reaches itself, which matters only if it were marked.
pub fn reachability(g: &CallGraph, vulns: &[NodeIdx]) -> Reachability {
    let n = g.node_count();
    let adj = g.successors();
    let mut is_vuln = vec![false; n];
    for &v in vulns {
        is_vuln[v] = true;
    }
    let mut reached_any = vec![false; n];
    let mut visited = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let mut pairs = 0;
    for a in g.application_nodes() {
        visited[a] = a;
        queue.push_back(a);
        while let Some(u) = queue.pop_front() {
            if is_vuln[u] {
                pairs += 1;
                reached_any[u] = true;
            }
            for &w in &adj[u] {
                if visited[w] != a {
                    visited[w] = a;
                    queue.push_back(w);
                }
            }
        }
    }
    let reached = vulns.iter().filter(|&&v| reached_any[v]).count();
    Reachability {
        reachable_paths: pairs,
        reached,
        reachable_node_fraction: if vulns.is_empty() {
            0.0
        } else {
            reached as f64 / vulns.len() as f64
        },
    }
}

/// Edge count and the number of nodes with at least one incident edge.
pub fn cg_size_stats(g: &CallGraph) -> (usize, usize) {
    let mut active = vec![false; g.node_count()];
    for e in g.edges() {
        active[e.source] = true;
        active[e.target] = true;
    }
    (g.edge_count(), active.iter().filter(|&&a| a).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnReport {
    pub program: String,
    pub tau: Option<f64>,
    pub edges: usize,
    pub active_nodes: usize,
    pub reachable_paths: usize,
    pub reachable_node_fraction: f64,
    pub time_ms_mean: f64,
    pub time_ms_std: f64,
}

impl VulnReport {
    /// Same report with the timing fields zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> VulnReport {
        VulnReport {
            time_ms_mean: 0.0,
            time_ms_std: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

/// Runs the analysis `warmup_runs` times unrecorded, then `measured_runs`
/// times recording wall-clock milliseconds.
pub fn timed_analysis(
    g: &CallGraph,
    vulns: &[NodeIdx],
    cfg: &VulnConfig,
    tau: Option<f64>,
) -> Result<VulnReport> {
    cfg.validate()?;
    let reference = reachability(g, vulns);
    for _ in 0..cfg.warmup_runs {
        let r = reachability(g, vulns);
        if r != reference {
            return Err(Error::Integrity("reachability differs between runs".into()));
        }
    }
    let mut times = Vec::with_capacity(cfg.measured_runs);
    for _ in 0..cfg.measured_runs {
        let start = Instant::now();
        let r = reachability(g, vulns);
        times.push(start.elapsed().as_secs_f64() * 1e3);
        if r != reference {
            return Err(Error::Integrity("reachability differs between runs".into()));
        }
    }
    let t = MeanStd::of(&times);
    let (edges, active_nodes) = cg_size_stats(g);
    Ok(VulnReport {
        program: g.program_id().to_owned(),
        tau,
        edges,
        active_nodes,
        reachable_paths: reference.reachable_paths,
        reachable_node_fraction: reference.reachable_node_fraction,
        time_ms_mean: t.mean,
        time_ms_std: t.std,
    })
}

/// Corpus table: one row per report, then a `mean` row.
pub fn write_vuln_csv<W: Write>(reports: &[VulnReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "program",
        "tau",
        "edges",
        "active_nodes",
        "reachable_paths",
        "reachable_node_fraction",
        "time_ms_mean",
        "time_ms_std",
    ])?;
    let fmt_tau = |t: Option<f64>| t.map_or("unpruned".to_owned(), |t| t.to_string());
    for r in reports {
        wtr.write_record([
            r.program.clone(),
            fmt_tau(r.tau),
            r.edges.to_string(),
            r.active_nodes.to_string(),
            r.reachable_paths.to_string(),
            r.reachable_node_fraction.to_string(),
            r.time_ms_mean.to_string(),
            r.time_ms_std.to_string(),
        ])?;
    }
    if !reports.is_empty() {
        let mean = |f: fn(&VulnReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
        wtr.write_record([
            "mean".to_owned(),
            String::new(),
            mean(|r| r.edges as f64).to_string(),
            mean(|r| r.active_nodes as f64).to_string(),
            mean(|r| r.reachable_paths as f64).to_string(),
            mean(|r| r.reachable_node_fraction).to_string(),
            mean(|r| r.time_ms_mean).to_string(),
            mean(|r| r.time_ms_std).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
