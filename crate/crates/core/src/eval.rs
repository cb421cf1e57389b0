//! Precision, recall and F-scores against dynamic ground truth, macro
//! averaging, weight × threshold grids and runtime summaries.

use std::collections::HashSet;
use std::hash::Hash;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CallGraph;
use crate::pruner::PrunedGraph;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall<T> {
    pub precision: T,
    pub recall: T,
    pub static_edges: usize,
    pub dynamic_edges: usize,
    pub overlap: usize,
    /// Set when the static set was empty and precision defaulted to 1.
    pub precision_degenerate: bool,
    /// Set when the dynamic set was empty and recall defaulted to 1.
    pub recall_degenerate: bool,
}

pub fn precision_recall<T: Scalar, K: Eq + Hash>(
    static_set: &HashSet<K>,
    dynamic_set: &HashSet<K>,
) -> PrecisionRecall<T> {
    let overlap = static_set.intersection(dynamic_set).count();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            T::one()
        } else {
            T::from_count(num) / T::from_count(den)
        }
    };
    PrecisionRecall {
        precision: ratio(overlap, static_set.len()),
        recall: ratio(overlap, dynamic_set.len()),
        static_edges: static_set.len(),
        dynamic_edges: dynamic_set.len(),
        overlap,
        precision_degenerate: static_set.is_empty(),
        recall_degenerate: dynamic_set.is_empty(),
    }
}

/// `(1 + β²)·p·r / (β²·p + r)`, or 0 when the denominator vanishes.
pub fn f_beta<T: Scalar>(p: T, r: T, beta: T) -> T {
    let b2 = beta * beta;
    let den = b2 * p + r;
    if den == T::zero() {
        T::zero()
    } else {
        (T::one() + b2) * p * r / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProgramScore<T> {
    pub program_id: String,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub f2: T,
    pub static_edges: usize,
    pub dynamic_edges: usize,
    pub overlap: usize,
    #[serde(default)]
    pub precision_degenerate: bool,
    #[serde(default)]
    pub recall_degenerate: bool,
}

impl<T: Scalar> ProgramScore<T> {
    pub fn from_sets<K: Eq + Hash>(
        program_id: impl Into<String>,
        static_set: &HashSet<K>,
        dynamic_set: &HashSet<K>,
    ) -> Self {
        let pr = precision_recall::<T, K>(static_set, dynamic_set);
        ProgramScore {
            program_id: program_id.into(),
            precision: pr.precision,
            recall: pr.recall,
            f1: f_beta(pr.precision, pr.recall, T::one()),
            f2: f_beta(pr.precision, pr.recall, T::lit(2.0)),
            static_edges: pr.static_edges,
            dynamic_edges: pr.dynamic_edges,
            overlap: pr.overlap,
            precision_degenerate: pr.precision_degenerate,
            recall_degenerate: pr.recall_degenerate,
        }
    }
}

fn check_same_program(a: &CallGraph, b: &CallGraph) -> Result<()> {
    if a.program_id() != b.program_id() {
        return Err(Error::usage(format!(
            "cannot compare program `{}` against `{}`",
            a.program_id(),
            b.program_id()
        )));
    }
    Ok(())
}

/// Scores the kept edges of a pruned graph against the dynamic graph.
pub fn evaluate_program<T: Scalar>(pruned: &PrunedGraph<'_, T>, dynamic_g: &CallGraph) -> Result<ProgramScore<T>> {
    check_same_program(pruned.base, dynamic_g)?;
    Ok(ProgramScore::from_sets(
        pruned.base.program_id(),
        &pruned.pair_set(),
        &dynamic_g.pair_set(),
    ))
}

/// Scores a whole (unpruned) static graph.
pub fn evaluate_graph<T: Scalar>(static_g: &CallGraph, dynamic_g: &CallGraph) -> Result<ProgramScore<T>> {
    check_same_program(static_g, dynamic_g)?;
    Ok(ProgramScore::from_sets(
        static_g.program_id(),
        &static_g.pair_set(),
        &dynamic_g.pair_set(),
    ))
}

/// Settings that produced a report, echoed into it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_retain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub config: EvalEcho,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub f2: T,
    /// Sorted by program id.
    pub programs: Vec<ProgramScore<T>>,
}

/// Unweighted means over programs. F-scores are means of the per-program
/// F-scores, not recomputed from the mean precision and recall.
pub fn macro_average<T: Scalar>(scores: &[ProgramScore<T>], config: EvalEcho) -> Result<EvalReport<T>> {
    if scores.is_empty() {
        return Err(Error::usage("cannot average zero programs"));
    }
    let mut programs = scores.to_vec();
    programs.sort_by(|a, b| a.program_id.cmp(&b.program_id));
    let n = T::from_count(programs.len());
    let mean = |f: fn(&ProgramScore<T>) -> T| programs.iter().map(f).sum::<T>() / n;
    Ok(EvalReport {
        config,
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        f2: mean(|s| s.f2),
        programs,
    })
}

impl<T: Scalar> EvalReport<T> {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    /// Per-program rows followed by a `macro` row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "program",
            "precision",
            "recall",
            "f1",
            "f2",
            "static_edges",
            "dynamic_edges",
            "overlap",
        ])?;
        for s in &self.programs {
            wtr.write_record([
                s.program_id.clone(),
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
                s.f2.to_string(),
                s.static_edges.to_string(),
                s.dynamic_edges.to_string(),
                s.overlap.to_string(),
            ])?;
        }
        wtr.write_record([
            "macro".to_owned(),
            self.precision.to_string(),
            self.recall.to_string(),
            self.f1.to_string(),
            self.f2.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GridRow<T> {
    pub w1: T,
    pub tau: T,
    #[serde(rename = "P")]
    pub precision: T,
    #[serde(rename = "R")]
    pub recall: T,
    #[serde(rename = "F1")]
    pub f1: T,
    #[serde(rename = "F2")]
    pub f2: T,
}

/// One row per `(w1, tau)` cell, in the order given.
pub fn grid_report<T: Scalar>(cells: &[(T, T, EvalReport<T>)]) -> Vec<GridRow<T>> {
    cells
        .iter()
        .map(|(w1, tau, r)| GridRow {
            w1: *w1,
            tau: *tau,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            f2: r.f2,
        })
        .collect()
}

/// Grid CSV with columns `w1,tau,P,R,F1,F2`.
pub fn write_grid_csv<T: Scalar, W: Write>(rows: &[GridRow<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(["w1", "tau", "P", "R", "F1", "F2"])?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramTiming {
    pub program: String,
    pub gen_s: f64,
    pub feat_s: f64,
    pub infer_s: f64,
    pub total_s: f64,
}

impl ProgramTiming {
    pub fn new(program: impl Into<String>, gen_s: f64, feat_s: f64, infer_s: f64) -> Result<Self> {
        let program = program.into();
        if [gen_s, feat_s, infer_s].iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::usage(format!("negative or non-finite timing for `{program}`")));
        }
        Ok(ProgramTiming {
            program,
            gen_s,
            feat_s,
            infer_s,
            total_s: gen_s + feat_s + infer_s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; `0±0` for no values.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub programs: Vec<ProgramTiming>,
    pub gen_s: MeanStd,
    pub feat_s: MeanStd,
    pub infer_s: MeanStd,
    pub total_s: MeanStd,
}

pub fn runtime_report(timings: Vec<ProgramTiming>) -> RuntimeReport {
    let col = |f: fn(&ProgramTiming) -> f64| MeanStd::of(&timings.iter().map(f).collect::<Vec<_>>());
    RuntimeReport {
        gen_s: col(|t| t.gen_s),
        feat_s: col(|t| t.feat_s),
        infer_s: col(|t| t.infer_s),
        total_s: col(|t| t.total_s),
        programs: timings,
    }
}

impl RuntimeReport {
    /// Runtime CSV: `program,gen_s,feat_s,infer_s,total_s`, then `mean±std` summary row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["program", "gen_s", "feat_s", "infer_s", "total_s"])?;
        for t in &self.programs {
            wtr.write_record([
                t.program.clone(),
                t.gen_s.to_string(),
                t.feat_s.to_string(),
                t.infer_s.to_string(),
                t.total_s.to_string(),
            ])?;
        }
        wtr.write_record([
            "mean±std".to_owned(),
            self.gen_s.to_string(),
            self.feat_s.to_string(),
            self.infer_s.to_string(),
            self.total_s.to_string(),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}
