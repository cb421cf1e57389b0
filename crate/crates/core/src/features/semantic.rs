//! Precomputed semantic edge embeddings, the prompt template fed to the
//! external embedder, and feature concatenation.

use std::collections::HashMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::EdgeKey;
use crate::Scalar;

/// Embedder input for one edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticPrompt {
    pub text: String,
}

pub fn build_semantic_prompt(caller_src: &str, callee_src: &str) -> SemanticPrompt {
    SemanticPrompt {
        text: format!("[CLS]{caller_src}[SEP]{callee_src}[EOS]"),
    }
}

/// Prompt for edges without available source: the method URIs stand in for
/// the method bodies.
pub fn signature_prompt(key: &EdgeKey) -> SemanticPrompt {
    build_semantic_prompt(&key.source, &key.target)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingLine {
    source: String,
    target: String,
    offset: u32,
    vector: Vec<f64>,
}

/// Parses embedding JSONL. All vectors must have one common length and
/// finite entries; blank lines are skipped.
pub fn load_semantic_embeddings<T: Scalar>(bytes: &[u8]) -> Result<HashMap<EdgeKey, Vec<T>>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format("embedding document", e.to_string()))?;
    let mut out = HashMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("line {}", i + 1);
        let rec: EmbeddingLine =
            serde_json::from_str(line).map_err(|e| Error::format(&loc, e.to_string()))?;
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(Error::format(
                    &loc,
                    format!("vector length {} differs from {d}", rec.vector.len()),
                ))
            }
            _ => {}
        }
        let vector = rec
            .vector
            .iter()
            .map(|&x| T::from_f64(x).filter(|v| v.is_finite()))
            .collect::<Option<Vec<T>>>()
            .ok_or_else(|| Error::format(&loc, "non-finite vector entry"))?;
        let key = EdgeKey::new(rec.source, rec.target, rec.offset);
        if out.insert(key, vector).is_some() {
            return Err(Error::format(&loc, "duplicate edge"));
        }
    }
    Ok(out)
}

/// `f_struct ⊕ f_sem`.
pub fn combine<T: Scalar>(structural: &[T], semantic: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(structural.len() + semantic.len());
    v.extend_from_slice(structural);
    v.extend_from_slice(semantic);
    v
}

pub fn split_combined<T: Scalar>(combined: &[T], struct_dim: usize) -> (&[T], &[T]) {
    combined.split_at(struct_dim)
}
