//! Per-edge feature vectors.

mod semantic;
mod signature;
mod structural;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CallGraph, EdgeKey, NodeIdx};
use crate::Scalar;

pub use semantic::{
    build_semantic_prompt, combine, load_semantic_embeddings, signature_prompt, split_combined,
    SemanticPrompt,
};
pub use signature::{
    callee_bucket, caller_bucket, fnv1a64, signature_feature, tokenize_uri, CALLEE_SALT,
    DEFAULT_SIG_DIM,
};
pub use structural::{
    default_entry_nodes, extract_structural, StructuralIndex, LOOKUPS_PER_EDGE, STRUCT_DIM,
    STRUCTURAL_FEATURE_NAMES,
};

/// Which representation feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFamily {
    Struct,
    Sig,
    Sem,
    Comb,
}

impl FeatureFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFamily::Struct => "struct",
            FeatureFamily::Sig => "sig",
            FeatureFamily::Sem => "sem",
            FeatureFamily::Comb => "comb",
        }
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "struct" => Ok(FeatureFamily::Struct),
            "sig" => Ok(FeatureFamily::Sig),
            "sem" => Ok(FeatureFamily::Sem),
            "comb" => Ok(FeatureFamily::Comb),
            other => Err(Error::usage(format!(
                "unknown feature family `{other}` (expected struct, sig, sem or comb)"
            ))),
        }
    }
}

/// Feature rows for every edge of one graph, aligned with `graph.edges()`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    pub family: FeatureFamily,
    pub keys: Vec<EdgeKey>,
    pub rows: Vec<Vec<T>>,
    /// Edges whose semantic part fell back to the signature vector.
    pub fallbacks: usize,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self) -> HashMap<&EdgeKey, &[T]> {
        self.keys
            .iter()
            .zip(&self.rows)
            .map(|(k, r)| (k, r.as_slice()))
            .collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        let d = self.dim();
        match self.family {
            FeatureFamily::Struct => STRUCTURAL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            FeatureFamily::Sig => (0..d).map(|i| format!("sig_{i}")).collect(),
            FeatureFamily::Sem => (0..d).map(|i| format!("sem_{i}")).collect(),
            FeatureFamily::Comb => STRUCTURAL_FEATURE_NAMES
                .iter()
                .map(|s| s.to_string())
                .chain((0..d.saturating_sub(STRUCT_DIM)).map(|i| format!("sem_{i}")))
                .collect(),
        }
    }

    /// Writes the CSV feature dump: `source,target,offset` then one column per feature.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["source".to_string(), "target".into(), "offset".into()];
        header.extend(self.column_names());
        wtr.write_record(&header)?;
        for (k, row) in self.keys.iter().zip(&self.rows) {
            let mut rec = vec![k.source.clone(), k.target.clone(), k.offset.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(family: FeatureFamily, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let width = rdr.headers()?.len();
        if width < 3 {
            return Err(Error::format("feature csv header", "expected source,target,offset columns"));
        }
        let mut keys = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let loc = format!("feature csv row {}", i + 1);
            let offset = rec[2]
                .parse::<u32>()
                .map_err(|e| Error::format(&loc, e.to_string()))?;
            keys.push(EdgeKey::new(&rec[0], &rec[1], offset));
            let row = rec
                .iter()
                .skip(3)
                .map(|s| {
                    T::from_str_radix(s, 10)
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::format(&loc, format!("bad value `{s}`")))
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        Ok(FeatureSet {
            family,
            keys,
            rows,
            fallbacks: 0,
        })
    }
}

/// Computes feature rows for every edge of `g`.
///
/// `Sem` and `Comb` take their semantic part from `embeddings`; edges without
/// an embedding use the signature vector of the same width instead. When no
/// embeddings exist at all the width is `sig_dim`.
pub fn build_features<T: Scalar>(
    g: &CallGraph,
    family: FeatureFamily,
    entry_nodes: &[NodeIdx],
    embeddings: Option<&HashMap<EdgeKey, Vec<T>>>,
    sig_dim: usize,
) -> Result<FeatureSet<T>> {
    let keys: Vec<EdgeKey> = g.edges().iter().map(|e| g.edge_key(e)).collect();
    let sem_dim = embeddings
        .and_then(|m| m.values().next().map(Vec::len))
        .unwrap_or(sig_dim);
    let semantic_or_fallback = |k: &EdgeKey| -> Result<(Vec<T>, bool)> {
        match embeddings.and_then(|m| m.get(k)) {
            Some(v) => Ok((v.clone(), false)),
            None => Ok((signature_feature(&k.source, &k.target, sem_dim)?, true)),
        }
    };

    let mut fallbacks = 0;
    let rows: Vec<Vec<T>> = match family {
        FeatureFamily::Struct => StructuralIndex::build(g, entry_nodes)
            .extract_all::<T>()
            .into_iter()
            .map(|a| a.to_vec())
            .collect(),
        FeatureFamily::Sig => keys
            .iter()
            .map(|k| signature_feature(&k.source, &k.target, sig_dim))
            .collect::<Result<_>>()?,
        FeatureFamily::Sem => keys
            .iter()
            .map(|k| {
                let (v, fb) = semantic_or_fallback(k)?;
                fallbacks += usize::from(fb);
                Ok(v)
            })
            .collect::<Result<_>>()?,
        FeatureFamily::Comb => {
            let structural = StructuralIndex::build(g, entry_nodes).extract_all::<T>();
            keys.iter()
                .zip(structural)
                .map(|(k, s)| {
                    let (v, fb) = semantic_or_fallback(k)?;
                    fallbacks += usize::from(fb);
                    Ok(combine(&s, &v))
                })
                .collect::<Result<_>>()?
        }
    };
    if fallbacks > 0 && embeddings.is_some() {
        log::info!(
            "{}: {fallbacks} of {} edges use the signature fallback",
            g.program_id(),
            keys.len()
        );
    }
    Ok(FeatureSet {
        family,
        keys,
        rows,
        fallbacks,
    })
}
