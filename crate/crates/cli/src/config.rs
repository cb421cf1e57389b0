//! Experiment configuration: one TOML file, every value overridable by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cgprune_core::client::VulnConfig;
use cgprune_core::features::{FeatureFamily, DEFAULT_SIG_DIM};
use cgprune_core::graph::{DEFAULT_SAMPLE_CAP, DEFAULT_STDLIB_PREFIXES};
use cgprune_core::pruner::DecisionRule;
use cgprune_core::synth::SynthConfig;
use cgprune_core::TrainConfig;

use crate::error::{CliError, CliResult};

/// One named collection of programs: matching static and dynamic graph
/// files (`<program>.json`) and an optional train/test split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub static_dir: PathBuf,
    pub dynamic_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub stdlib_prefixes: Vec<String>,
    pub sample_cap: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            stdlib_prefixes: DEFAULT_STDLIB_PREFIXES.iter().map(|s| s.to_string()).collect(),
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub family: FeatureFamily,
    pub sig_dim: usize,
    /// Directory of `<program>.jsonl` embedding files for `sem` and `comb`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings_dir: Option<PathBuf>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            family: FeatureFamily::Struct,
            sig_dim: DEFAULT_SIG_DIM,
            embeddings_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Learned,
    /// Retains or prunes each edge with probability 1/2.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    pub tau: f64,
    pub rule: DecisionRule,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            tau: 0.9,
            rule: DecisionRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub w1_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            w1_grid: vec![0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
            tau_grid: vec![0.6, 0.7, 0.8, 0.9, 0.95],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Base seed for generation, sampling, training and vulnerability marking.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub synth: SynthConfig,
    pub datasets: Vec<DatasetSpec>,
    pub filter: FilterConfig,
    pub features: FeaturesConfig,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub prune: PruneSection,
    pub sweep: SweepConfig,
    pub vuln: VulnConfig,
}

impl ExperimentConfig {
    /// Reads a TOML config. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut cfg.datasets {
            resolve(&mut d.static_dir);
            resolve(&mut d.dynamic_dir);
            if let Some(s) = d.split.as_mut() {
                resolve(s);
            }
        }
        if let Some(e) = cfg.features.embeddings_dir.as_mut() {
            resolve(e);
        }
        if let Some(o) = cfg.out.as_mut() {
            resolve(o);
        }
        Ok(cfg)
    }

    /// Propagates the base seed into the sections that carry their own.
    pub fn sync_seeds(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.vuln.seed = self.seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.vuln.validate()?;
        let tau_ok = |t: f64| (0.5..=1.0).contains(&t);
        if !tau_ok(self.prune.tau) {
            return Err(CliError::Config(format!("prune.tau {} outside [0.5, 1]", self.prune.tau)));
        }
        if self.sweep.w1_grid.is_empty() || self.sweep.tau_grid.is_empty() {
            return Err(CliError::Config("sweep grids must be non-empty".into()));
        }
        if let Some(w) = self.sweep.w1_grid.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
            return Err(CliError::Config(format!("sweep.w1_grid value {w} outside (0, 1)")));
        }
        if let Some(t) = self.sweep.tau_grid.iter().find(|&&t| !tau_ok(t)) {
            return Err(CliError::Config(format!("sweep.tau_grid value {t} outside [0.5, 1]")));
        }
        if self.features.sig_dim == 0 {
            return Err(CliError::Config("features.sig_dim must be positive".into()));
        }
        if self.filter.sample_cap == 0 {
            return Err(CliError::Config("filter.sample_cap must be positive".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("dataset names must be unique".into()));
        }
        Ok(())
    }
}
