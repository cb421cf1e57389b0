//! Synthetic corpora: static call graphs with a planted dynamic subgraph.
//!
//! Each static edge carries a label (observed at run time or not) and three
//! independent appearance channels. With probability `signal_strength` a
//! channel copies the label, otherwise it is drawn at random with the
//! corpus-wide retain prevalence, so at strength 0 the structure says
//! nothing about the label. The channels shape the graph as follows:
//!
//! * call site: retain-like edges sit alone at their call site, prune-like
//!   edges share polymorphic sites of 2 to 6 targets;
//! * callee: retain-like edges call into a small pool of popular methods,
//!   prune-like edges into a large pool of rarely called ones;
//! * caller: retain-like edges start in application entry methods (never
//!   called themselves), prune-like edges in library methods.
//!
//! Dynamic graphs contain the retained pairs, a share of edges the static
//! graph misses, and some standard-library traffic that ingestion filters.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CallGraph, GraphKind, NodeIdx, Scope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub programs: usize,
    /// Mean number of non-library static edges per program.
    pub edges_per_program: usize,
    /// Target ratio of pruned to retained edges.
    pub imbalance: f64,
    pub signal_strength: f64,
    /// Dynamic edges absent from the static graph, as a fraction of retained edges.
    pub missed_edge_rate: f64,
    /// Standard-library edges added, as a fraction of static edges.
    pub stdlib_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            programs: 12,
            edges_per_program: 2000,
            imbalance: 10.0,
            signal_strength: 0.9,
            missed_edge_rate: 0.05,
            stdlib_fraction: 0.05,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.programs < 2 {
            return Err(Error::usage("a synthetic corpus needs at least 2 programs"));
        }
        if self.edges_per_program < 20 {
            return Err(Error::usage("edges_per_program must be at least 20"));
        }
        if !(self.imbalance >= 1.0 && self.imbalance.is_finite()) {
            return Err(Error::usage("imbalance must be at least 1"));
        }
        if !unit(self.signal_strength) || !unit(self.missed_edge_rate) || !unit(self.stdlib_fraction) {
            return Err(Error::usage(
                "signal_strength, missed_edge_rate and stdlib_fraction must lie in [0, 1]",
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::usage("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthProgram {
    pub static_graph: CallGraph,
    pub dynamic_graph: CallGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub programs: Vec<SynthProgram>,
    pub split: Split,
}

pub fn program_id(i: usize) -> String {
    format!("synth-{i:03}")
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut size_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let programs = (0..cfg.programs)
        .map(|i| {
            let n = (cfg.edges_per_program as f64 * size_rng.random_range(0.75..1.25)).round() as usize;
            generate_program(cfg, &program_id(i), n, stream_rng(cfg.seed, i as u64 + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ids: Vec<String> = (0..cfg.programs).map(program_id).collect();
    ids.shuffle(&mut size_rng);
    let n_test = ((cfg.programs as f64 * cfg.test_fraction).round() as usize).clamp(1, cfg.programs - 1);
    let mut test = ids.split_off(cfg.programs - n_test);
    ids.sort();
    test.sort();
    Ok(SynthCorpus {
        programs,
        split: Split { train: ids, test },
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct Planned {
    retain: bool,
    site: bool,
    callee: bool,
    caller: bool,
}

struct Builder {
    g: CallGraph,
    pairs: HashSet<(NodeIdx, NodeIdx)>,
    next_offset: Vec<u32>,
}

impl Builder {
    fn node(&mut self, uri: String, scope: Scope) -> Result<NodeIdx> {
        self.next_offset.push(0);
        self.g.add_node(uri, scope)
    }

    fn offset(&mut self, src: NodeIdx) -> u32 {
        let o = self.next_offset[src];
        self.next_offset[src] += 1;
        o
    }

    fn edge(&mut self, s: NodeIdx, t: NodeIdx, offset: u32) -> Result<()> {
        let (su, tu) = (self.g.node(s).uri.clone(), self.g.node(t).uri.clone());
        self.pairs.insert((s, t));
        self.g.add_edge(&su, &tu, offset)?;
        Ok(())
    }

    /// A target from `pool` not yet paired with `src`; falls back to `backup`.
    fn free_target<R: Rng>(&self, rng: &mut R, src: NodeIdx, pool: &[NodeIdx], backup: &[NodeIdx]) -> Option<NodeIdx> {
        for _ in 0..64 {
            let t = pool[rng.random_range(0..pool.len())];
            if t != src && !self.pairs.contains(&(src, t)) {
                return Some(t);
            }
        }
        pool.iter()
            .chain(backup)
            .copied()
            .find(|&t| t != src && !self.pairs.contains(&(src, t)))
    }
}

fn generate_program(cfg: &SynthConfig, pid: &str, n_edges: usize, mut rng: ChaCha8Rng) -> Result<SynthProgram> {
    let n_true = ((n_edges as f64 / (1.0 + cfg.imbalance)).round() as usize).max(1);
    let prevalence = n_true as f64 / n_edges as f64;
    let s = cfg.signal_strength;

    let mut labels: Vec<bool> = (0..n_edges).map(|i| i < n_true).collect();
    labels.shuffle(&mut rng);
    let channel = |rng: &mut ChaCha8Rng, y: bool| {
        if rng.random::<f64>() < s {
            y
        } else {
            rng.random::<f64>() < prevalence
        }
    };
    let plan: Vec<Planned> = labels
        .iter()
        .map(|&y| Planned {
            retain: y,
            site: channel(&mut rng, y),
            callee: channel(&mut rng, y),
            caller: channel(&mut rng, y),
        })
        .collect();

    let mut b = Builder {
        g: CallGraph::new(pid, GraphKind::Static0Cfa).with_generation_time(Some(n_edges as f64 * 5e-4)),
        pairs: HashSet::new(),
        next_offset: Vec::new(),
    };
    let n_app = (n_edges / 40).max(8);
    let n_hot = (n_edges / 150).max(6);
    let n_cold = (n_edges / 4).max(40);
    let app = (0..n_app)
        .map(|i| b.node(format!("app/{pid}/Module{}.handle{i}(Ljava/lang/String;)V", i % 7), Scope::Application))
        .collect::<Result<Vec<_>>>()?;
    let hot = (0..n_hot)
        .map(|i| b.node(format!("lib/core/Common{}.get{i}()Ljava/lang/Object;", i % 3), Scope::Dependency))
        .collect::<Result<Vec<_>>>()?;
    let cold = (0..n_cold)
        .map(|i| b.node(format!("lib/ext/Impl{}.visit{i}(I)I", i % 29), Scope::Dependency))
        .collect::<Result<Vec<_>>>()?;
    let n_std = (n_edges as f64 * cfg.stdlib_fraction).round() as usize;
    let stdlib_nodes = ["java/util/ArrayList.add(Ljava/lang/Object;)Z", "java/lang/String.length()I",
        "javax/crypto/Cipher.init(I)V", "sun/misc/Unsafe.getInt(J)I", "com/sun/net/Http.open()V",
        "jdk/internal/Misc.run()V", "java/lang/Thread.run()V"];
    let std_idx = if n_std > 0 {
        stdlib_nodes
            .iter()
            .map(|u| b.node(u.to_string(), Scope::Dependency))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut dynamic_pairs: Vec<(NodeIdx, NodeIdx, u32)> = Vec::new();
    let mut emit = |b: &mut Builder, rng: &mut ChaCha8Rng, src: NodeIdx, offset: u32, p: &Planned| -> Result<()> {
        let (pool, backup) = if p.callee { (&hot, &cold) } else { (&cold, &hot) };
        let Some(t) = b.free_target(rng, src, pool, backup) else {
            return Ok(());
        };
        b.edge(src, t, offset)?;
        if p.retain {
            dynamic_pairs.push((src, t, offset));
        }
        Ok(())
    };

    for caller_like in [true, false] {
        let sources: &[NodeIdx] = if caller_like { &app } else { &cold };
        let (mono, mut poly): (Vec<&Planned>, Vec<&Planned>) = plan
            .iter()
            .filter(|p| p.caller == caller_like)
            .partition(|p| p.site);
        for p in mono {
            let src = sources[rng.random_range(0..sources.len())];
            let off = b.offset(src);
            emit(&mut b, &mut rng, src, off, p)?;
        }
        poly.shuffle(&mut rng);
        let mut rest = &poly[..];
        while !rest.is_empty() {
            let mut size = rng.random_range(2..=6).min(rest.len());
            if rest.len() - size == 1 {
                size += 1;
            }
            let (site, tail) = rest.split_at(size);
            rest = tail;
            let src = sources[rng.random_range(0..sources.len())];
            let off = b.offset(src);
            for p in site {
                emit(&mut b, &mut rng, src, off, p)?;
            }
        }
    }

    // Library traffic in both directions; about half of it is observed.
    let mut std_dynamic = Vec::new();
    for i in 0..n_std {
        let a = app[rng.random_range(0..app.len())];
        let l = std_idx[rng.random_range(0..std_idx.len())];
        let (src, tgt) = if i % 3 == 2 { (l, a) } else { (a, l) };
        if b.pairs.contains(&(src, tgt)) {
            continue;
        }
        let off = b.offset(src);
        b.edge(src, tgt, off)?;
        if rng.random::<bool>() {
            std_dynamic.push((src, tgt, off));
        }
    }

    let mut dynamic = CallGraph::new(pid, GraphKind::Dynamic);
    for n in b.g.nodes() {
        dynamic.add_node(n.uri.clone(), n.scope)?;
    }
    let static_g = b.g;
    let add = |d: &mut CallGraph, (s, t, o): (NodeIdx, NodeIdx, u32)| -> Result<()> {
        d.add_edge(&static_g.node(s).uri, &static_g.node(t).uri, o)?;
        Ok(())
    };
    for e in dynamic_pairs.into_iter().chain(std_dynamic) {
        add(&mut dynamic, e)?;
    }
    let n_missed = (n_true as f64 * cfg.missed_edge_rate).round() as usize;
    let mut missed = 0;
    let mut attempts = 0;
    while missed < n_missed && attempts < 100 * (n_missed + 1) {
        attempts += 1;
        let s = app[rng.random_range(0..app.len())];
        let t = if rng.random::<bool>() { &hot } else { &cold };
        let t = t[rng.random_range(0..t.len())];
        if b.pairs.contains(&(s, t)) {
            continue;
        }
        if add(&mut dynamic, (s, t, 1_000_000 + missed as u32)).is_ok() {
            b.pairs.insert((s, t));
            missed += 1;
        }
    }

    Ok(SynthProgram {
        static_graph: static_g,
        dynamic_graph: dynamic,
    })
}
