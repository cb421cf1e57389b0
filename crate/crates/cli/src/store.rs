//! Artifact storage: atomic writes, content digests and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const RUN_MANIFEST: &str = "run-manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a sequence of serializable parts, used for config fingerprints.
pub fn fingerprint<S: Serialize>(parts: &S) -> String {
    sha256_hex(&serde_json::to_vec(parts).expect("config values serialize"))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Core(cgprune_core::Error::Parse {
            record: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

/// Renders `p` relative to `root` when it lies inside it, so manifests do
/// not depend on where the output directory lives.
pub fn display_path(root: &Path, p: &Path) -> String {
    match p.strip_prefix(root) {
        Ok(rel) => format!("$OUT/{}", rel.display()),
        Err(_) => p.display().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    /// Absent for files holding wall-clock timings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamRecord {
    pub stage: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub upstream: Vec<UpstreamRecord>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// Collects the files one stage reads and writes.
pub struct StageRecorder {
    root: PathBuf,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    upstream: Vec<UpstreamRecord>,
}

impl StageRecorder {
    pub fn new(root: &Path) -> Self {
        StageRecorder {
            root: root.to_owned(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            upstream: Vec::new(),
        }
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read(path)?;
        self.inputs.push(FileRecord {
            path: display_path(&self.root, path),
            sha256: Some(sha256_hex(&bytes)),
        });
        Ok(bytes)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_atomic(path, bytes)?;
        self.outputs.push(FileRecord {
            path: display_path(&self.root, path),
            sha256: Some(sha256_hex(bytes)),
        });
        Ok(())
    }

    /// Writes a file whose content includes wall-clock timings.
    pub fn write_timing(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_atomic(path, bytes)?;
        self.outputs.push(FileRecord {
            path: display_path(&self.root, path),
            sha256: None,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    pub fn upstream(&mut self, m: &RunManifest) {
        self.upstream.push(UpstreamRecord {
            stage: m.stage.clone(),
            config_hash: m.config_hash.clone(),
        });
    }

    pub fn finish(self, stage_dir: &Path, stage: &str, config_hash: String, seed: u64) -> CliResult<RunManifest> {
        let m = RunManifest {
            stage: stage.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            config_hash,
            seed,
            upstream: self.upstream,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        write_json(&stage_dir.join(RUN_MANIFEST), &m)?;
        Ok(m)
    }
}

/// Loads the run manifest of an upstream stage and checks that it was
/// produced under the expected configuration and that none of its outputs
/// changed since.
pub fn verify_upstream(root: &Path, stage_dir: &Path, stage: &str, expected_hash: &str) -> CliResult<RunManifest> {
    let path = stage_dir.join(RUN_MANIFEST);
    if !path.exists() {
        return Err(CliError::Stale(format!(
            "stage `{stage}` has not been run (missing {})",
            path.display()
        )));
    }
    let m: RunManifest = read_json(&path)?;
    if m.stage != stage {
        return Err(CliError::Stale(format!("{} belongs to stage `{}`, expected `{stage}`", path.display(), m.stage)));
    }
    if m.config_hash != expected_hash {
        return Err(CliError::Stale(format!(
            "stage `{stage}` was produced under a different configuration; rerun it"
        )));
    }
    if m.tool_version != TOOL_VERSION {
        log::warn!("stage `{stage}` was produced by {}, this is {TOOL_VERSION}", m.tool_version);
    }
    for out in &m.outputs {
        let Some(expected) = &out.sha256 else { continue };
        let p = match out.path.strip_prefix("$OUT/") {
            Some(rel) => root.join(rel),
            None => PathBuf::from(&out.path),
        };
        let actual = sha256_hex(&read(&p)?);
        if &actual != expected {
            return Err(CliError::Stale(format!(
                "{} changed after stage `{stage}` wrote it",
                p.display()
            )));
        }
    }
    Ok(m)
}
