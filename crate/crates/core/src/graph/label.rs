//! Edge filtering, dynamic-oracle labeling, sampling and dataset statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CallGraph, GraphKind};
use crate::error::{Error, Result};

/// Package prefixes of the Java runtime.
pub const DEFAULT_STDLIB_PREFIXES: [&str; 5] = ["java/", "javax/", "sun/", "com/sun/", "jdk/"];

/// Edge budget per program above which prune-labeled edges are subsampled.
pub const DEFAULT_SAMPLE_CAP: usize = 20_000;

/// Training label of a static edge. `Retain` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Prune = 0,
    Retain = 1,
}

impl Label {
    pub fn is_retain(self) -> bool {
        self == Label::Retain
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Prune),
            1 => Ok(Label::Retain),
            _ => Err(format!("label must be 0 or 1, got {v}")),
        }
    }
}

/// One line of the labeled-edge JSONL output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledEdge {
    pub source: String,
    pub target: String,
    pub offset: u32,
    pub label: Label,
    pub program: String,
}

impl LabeledEdge {
    pub fn key(&self) -> super::EdgeKey {
        super::EdgeKey::new(self.source.clone(), self.target.clone(), self.offset)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub retain: usize,
    pub prune: usize,
}

impl LabelCounts {
    pub fn of(edges: &[LabeledEdge]) -> Self {
        let retain = edges.iter().filter(|e| e.label.is_retain()).count();
        LabelCounts {
            retain,
            prune: edges.len() - retain,
        }
    }

    pub fn total(&self) -> usize {
        self.retain + self.prune
    }

    pub fn ratio(&self) -> Result<f64> {
        if self.retain == 0 {
            return Err(Error::Degenerate(format!(
                "no retain-labeled edges among {} edges",
                self.total()
            )));
        }
        Ok(self.prune as f64 / self.retain as f64)
    }
}

impl std::ops::Add for LabelCounts {
    type Output = LabelCounts;

    fn add(self, o: LabelCounts) -> LabelCounts {
        LabelCounts {
            retain: self.retain + o.retain,
            prune: self.prune + o.prune,
        }
    }
}

/// Drops every edge whose source or target URI starts with one of `prefixes`.
/// Nodes are kept as-is.
pub fn filter_stdlib_edges<S: AsRef<str>>(g: &CallGraph, prefixes: &[S]) -> CallGraph {
    let hit = |uri: &str| prefixes.iter().any(|p| uri.starts_with(p.as_ref()));
    g.retain_edges(|e| !hit(g.source_uri(e)) && !hit(g.target_uri(e)))
}

/// Labels each static edge `Retain` iff its `(source, target)` pair was
/// observed in the dynamic graph. Matching ignores offsets.
pub fn label_edges(static_g: &CallGraph, dynamic_g: &CallGraph) -> Result<Vec<LabeledEdge>> {
    if static_g.program_id() != dynamic_g.program_id() {
        return Err(Error::usage(format!(
            "program mismatch: static `{}` vs dynamic `{}`",
            static_g.program_id(),
            dynamic_g.program_id()
        )));
    }
    if dynamic_g.kind() != GraphKind::Dynamic {
        return Err(Error::usage(format!(
            "oracle graph for `{}` must be of kind dynamic",
            dynamic_g.program_id()
        )));
    }
    let observed = dynamic_g.pair_set();
    Ok(static_g
        .edges()
        .iter()
        .map(|e| {
            let (s, t) = (static_g.source_uri(e), static_g.target_uri(e));
            LabeledEdge {
                source: s.to_owned(),
                target: t.to_owned(),
                offset: e.offset,
                label: if observed.contains(&(s, t)) {
                    Label::Retain
                } else {
                    Label::Prune
                },
                program: static_g.program_id().to_owned(),
            }
        })
        .collect())
}

/// Caps a program's edge list at `cap` edges.
///
/// Retain-labeled edges are never dropped; the remaining budget is filled by
/// a seeded uniform sample of prune-labeled edges. Input order is preserved.
pub fn sample_large_program(
    edges: &[LabeledEdge],
    cap: usize,
    seed: u64,
) -> Result<Vec<LabeledEdge>> {
    if cap == 0 {
        return Err(Error::usage("sample cap must be positive"));
    }
    if edges.len() <= cap {
        return Ok(edges.to_vec());
    }
    let prune_positions: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.label.is_retain())
        .map(|(i, _)| i)
        .collect();
    let n_retain = edges.len() - prune_positions.len();
    let budget = cap.saturating_sub(n_retain);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<usize> = rand::seq::index::sample(&mut rng, prune_positions.len(), budget)
        .into_iter()
        .map(|k| prune_positions[k])
        .collect();

    Ok(edges
        .iter()
        .enumerate()
        .filter(|(i, e)| e.label.is_retain() || chosen.contains(i))
        .map(|(_, e)| e.clone())
        .collect())
}

/// Ratio of prune-labeled to retain-labeled edges.
pub fn pr_ratio(edges: &[LabeledEdge]) -> Result<f64> {
    LabelCounts::of(edges).ratio()
}

pub fn write_labeled_jsonl<W: Write>(mut w: W, edges: &[LabeledEdge]) -> Result<()> {
    for e in edges {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_labeled_jsonl<R: BufRead>(r: R) -> Result<Vec<LabeledEdge>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: LabeledEdge = serde_json::from_str(&line)
            .map_err(|err| Error::parse(format!("line {}", i + 1), err.to_string()))?;
        out.push(e);
    }
    Ok(out)
}

/// Train/test split of one dataset plus its labeled-edge statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub train_programs: Vec<String>,
    pub test_programs: Vec<String>,
    pub edge_counts: BTreeMap<String, LabelCounts>,
    pub pr_ratio: f64,
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        train_programs: Vec<String>,
        test_programs: Vec<String>,
        edge_counts: BTreeMap<String, LabelCounts>,
    ) -> Result<Self> {
        let name = name.into();
        let train: BTreeSet<&String> = train_programs.iter().collect();
        if let Some(p) = test_programs.iter().find(|p| train.contains(p)) {
            return Err(Error::Integrity(format!(
                "dataset `{name}`: program `{p}` is in both train and test splits"
            )));
        }
        let total = edge_counts
            .values()
            .fold(LabelCounts::default(), |acc, c| acc + *c);
        let pr_ratio = total
            .ratio()
            .map_err(|e| Error::Degenerate(format!("dataset `{name}`: {e}")))?;
        Ok(DatasetManifest {
            name,
            train_programs,
            test_programs,
            edge_counts,
            pr_ratio,
        })
    }

    pub fn totals(&self) -> LabelCounts {
        self.edge_counts
            .values()
            .fold(LabelCounts::default(), |acc, c| acc + *c)
    }

    /// Union of several datasets. Program ids must be distinct across inputs.
    pub fn combine(name: impl Into<String>, parts: &[DatasetManifest]) -> Result<Self> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut counts = BTreeMap::new();
        for m in parts {
            train.extend(m.train_programs.iter().cloned());
            test.extend(m.test_programs.iter().cloned());
            for (p, c) in &m.edge_counts {
                if counts.insert(p.clone(), *c).is_some() {
                    return Err(Error::Integrity(format!(
                        "program `{p}` appears in more than one dataset"
                    )));
                }
            }
        }
        DatasetManifest::new(name, train, test, counts)
    }
}
