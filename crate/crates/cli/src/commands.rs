//! One function per subcommand. Every stage writes into its own directory
//! under the output root and finishes with a run manifest.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cgprune_core::client::{mark_vulnerable, timed_analysis, write_vuln_csv, VulnConfig, VulnReport};
use cgprune_core::eval::{
    evaluate_graph, macro_average, runtime_report, write_grid_csv, EvalEcho, GridRow, ProgramTiming,
};
use cgprune_core::features::{load_semantic_embeddings, FeatureFamily};
use cgprune_core::graph::{load_call_graph, read_labeled_jsonl, write_labeled_jsonl, CallGraph, DatasetManifest, EdgeKey};
use cgprune_core::learner::write_training_log;
use cgprune_core::pruner::{score_edges, write_probabilities_csv, EdgeScorer, RandomClassifier};
use cgprune_core::synth::{generate_corpus, Split};
use cgprune_core::{Error, EvalReport, FeatureSet};

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    default_split, evaluate, evaluate_unpruned, fit, prepare_program, program_seed, sweep_grid, training_set,
    ModelArtifact, TestProgram,
};
use crate::store::{display_path, fingerprint, verify_upstream, RunManifest, StageRecorder, RUN_MANIFEST};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Corpus,
    Dataset,
    Features,
    Model,
    Pruned,
    Eval,
    Sweep,
    Vuln,
    Report,
}

impl Stage {
    /// Name of the subcommand that produces the stage.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Corpus => "gen-synth",
            Stage::Dataset => "ingest",
            Stage::Features => "features",
            Stage::Model => "train",
            Stage::Pruned => "prune",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
            Stage::Vuln => "vuln",
            Stage::Report => "report",
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Dataset => "dataset",
            Stage::Features => "features",
            Stage::Model => "model",
            Stage::Pruned => "pruned",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
            Stage::Vuln => "vuln",
            Stage::Report => "report",
        }
    }
}

/// Program listing written by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub datasets: Vec<DatasetManifest>,
    /// Union of all datasets.
    pub combined: DatasetManifest,
    pub programs: Vec<ProgramEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramEntry {
    pub program: String,
    pub dataset: String,
    pub test: bool,
    /// Labeled edges kept after sampling.
    pub sampled_edges: usize,
}

impl DatasetIndex {
    pub fn train_programs(&self) -> impl Iterator<Item = &str> {
        self.programs.iter().filter(|p| !p.test).map(|p| p.program.as_str())
    }

    pub fn test_programs(&self) -> impl Iterator<Item = &str> {
        self.programs.iter().filter(|p| p.test).map(|p| p.program.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub pruned: EvalReport,
    pub unpruned: EvalReport,
    pub random: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
}

impl From<&EvalReport> for Scores {
    fn from(r: &EvalReport) -> Self {
        Scores {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            f2: r.f2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnSummary {
    pub unpruned_edges: f64,
    pub pruned_edges: f64,
    pub unpruned_reachable_node_fraction: f64,
    pub pruned_reachable_node_fraction: f64,
    pub unpruned_reachable_paths: f64,
    pub pruned_reachable_paths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: DatasetManifest,
    pub tau: f64,
    pub pruned: Scores,
    pub unpruned: Scores,
    pub random: Scores,
    pub vuln: VulnSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<GridRow<f64>>>,
}

type Timings = BTreeMap<String, f64>;

/// Validated configuration plus the output root.
pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> CliResult<Self> {
        cfg.validate()?;
        Ok(Workspace { cfg, out: out.into() })
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.dir_name())
    }

    /// Without configured datasets the generated corpus is the only dataset.
    pub fn uses_corpus(&self) -> bool {
        self.cfg.datasets.is_empty()
    }

    pub fn datasets(&self) -> Vec<DatasetSpec> {
        if !self.uses_corpus() {
            return self.cfg.datasets.clone();
        }
        let c = self.dir(Stage::Corpus);
        vec![DatasetSpec {
            name: "synthetic".into(),
            static_dir: c.join("static"),
            dynamic_dir: c.join("dynamic"),
            split: Some(c.join("split.json")),
        }]
    }

    /// Configuration fingerprint of a stage, chained through its upstream stages.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let c = &self.cfg;
        let show = |p: &Path| display_path(&self.out, p);
        match stage {
            Stage::Corpus => fingerprint(&("corpus", &c.synth)),
            Stage::Dataset => {
                let ds: Vec<_> = self
                    .datasets()
                    .iter()
                    .map(|d| (d.name.clone(), show(&d.static_dir), show(&d.dynamic_dir), d.split.as_deref().map(show)))
                    .collect();
                let corpus = self.uses_corpus().then(|| self.stage_hash(Stage::Corpus));
                fingerprint(&("dataset", ds, &c.filter, c.seed, corpus))
            }
            Stage::Features => fingerprint(&(
                "features",
                self.stage_hash(Stage::Dataset),
                c.features.family,
                c.features.sig_dim,
                c.features.embeddings_dir.as_deref().map(show),
            )),
            Stage::Model => fingerprint(&("model", self.stage_hash(Stage::Features), c.model, &c.train)),
            Stage::Pruned => fingerprint(&("pruned", self.stage_hash(Stage::Model), &c.prune)),
            Stage::Eval => fingerprint(&("eval", self.stage_hash(Stage::Pruned), c.seed)),
            Stage::Sweep => fingerprint(&("sweep", self.stage_hash(Stage::Features), &c.train, &c.sweep, c.prune.rule)),
            Stage::Vuln => fingerprint(&("vuln", self.stage_hash(Stage::Pruned), &c.vuln)),
            Stage::Report => fingerprint(&("report", self.stage_hash(Stage::Eval), self.stage_hash(Stage::Vuln))),
        }
    }

    fn verify(&self, rec: &mut StageRecorder, stage: Stage) -> CliResult<RunManifest> {
        let m = verify_upstream(&self.out, &self.dir(stage), stage.command(), &self.stage_hash(stage))?;
        rec.upstream(&m);
        Ok(m)
    }

    /// Checks the upstream stages, then clears the stage directory.
    fn begin(&self, stage: Stage, upstream: &[Stage]) -> CliResult<(PathBuf, StageRecorder)> {
        let mut rec = StageRecorder::new(&self.out);
        for &u in upstream {
            self.verify(&mut rec, u)?;
        }
        let dir = self.dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        log::info!("{}: writing {}", stage.command(), dir.display());
        Ok((dir, rec))
    }

    fn finish(&self, rec: StageRecorder, stage: Stage) -> CliResult<RunManifest> {
        rec.finish(&self.dir(stage), stage.command(), self.stage_hash(stage), self.cfg.seed)
    }

    fn index(&self, rec: &mut StageRecorder) -> CliResult<DatasetIndex> {
        let path = self.dir(Stage::Dataset).join("manifest.json");
        parse_json(&path, &rec.read_input(&path)?)
    }

    fn graph(&self, rec: &mut StageRecorder, stage: Stage, sub: &str, program: &str) -> CliResult<CallGraph> {
        let path = self.dir(stage).join(sub).join(format!("{program}.json"));
        load_graph(&path, &rec.read_input(&path)?)
    }

    fn features(&self, rec: &mut StageRecorder, program: &str) -> CliResult<FeatureSet> {
        let path = self.dir(Stage::Features).join(format!("{program}.csv"));
        let bytes = rec.read_input(&path)?;
        FeatureSet::read_csv(self.cfg.features.family, bytes.as_slice()).map_err(|e| in_file(&path, e))
    }

    fn model(&self, rec: &mut StageRecorder) -> CliResult<ModelArtifact> {
        let path = self.dir(Stage::Model).join("model.json");
        ModelArtifact::from_json_bytes(&rec.read_input(&path)?).map_err(|e| in_file(&path, e))
    }

    fn train_rows(&self, rec: &mut StageRecorder, index: &DatasetIndex) -> CliResult<(Vec<Vec<f64>>, Vec<cgprune_core::graph::Label>)> {
        let mut parts = Vec::new();
        for p in index.train_programs() {
            let path = self.dir(Stage::Dataset).join("labeled").join(format!("{p}.jsonl"));
            let labels = read_labeled_jsonl(rec.read_input(&path)?.as_slice()).map_err(|e| in_file(&path, e))?;
            parts.push((labels, self.features(rec, p)?));
        }
        let refs: Vec<_> = parts.iter().map(|(l, f)| (l.as_slice(), f)).collect();
        Ok(training_set(&refs)?)
    }
}

/// Adds the file name to parse-type errors.
fn in_file(path: &Path, e: Error) -> CliError {
    let at = |what: String| format!("{}: {what}", path.display());
    CliError::Core(match e {
        Error::Parse { record, message } => Error::Parse {
            record: at(record),
            message,
        },
        Error::Format { location, message } => Error::Format {
            location: at(location),
            message,
        },
        Error::Integrity(m) => Error::Integrity(at(m)),
        other => other,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        CliError::Core(Error::Parse {
            record: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

fn load_graph(path: &Path, bytes: &[u8]) -> CliResult<CallGraph> {
    let ing = load_call_graph(bytes).map_err(|e| in_file(path, e))?;
    if ing.duplicate_edges > 0 {
        log::warn!("{}: collapsed {} repeated edges", path.display(), ing.duplicate_edges);
    }
    Ok(ing.graph)
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> cgprune_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn check_program_id(id: &str) -> CliResult<()> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(CliError::Core(Error::Integrity(format!(
            "program id `{id}` cannot be used as a file name"
        ))));
    }
    Ok(())
}

/// `gen-synth`: writes a synthetic corpus with a train/test split.
pub fn gen_synth(ws: &Workspace) -> CliResult<RunManifest> {
    let corpus = generate_corpus(&ws.cfg.synth)?;
    let (dir, mut rec) = ws.begin(Stage::Corpus, &[])?;
    for p in &corpus.programs {
        let id = p.static_graph.program_id();
        rec.write(&dir.join("static").join(format!("{id}.json")), &p.static_graph.to_json_bytes(None)?)?;
        rec.write(&dir.join("dynamic").join(format!("{id}.json")), &p.dynamic_graph.to_json_bytes(None)?)?;
    }
    rec.write_json(&dir.join("split.json"), &corpus.split)?;
    ws.finish(rec, Stage::Corpus)
}

struct RawProgram {
    dataset: usize,
    static_graph: CallGraph,
    dynamic_graph: CallGraph,
}

/// `ingest`: filters, labels and samples every program that has both a
/// static and a dynamic graph.
pub fn ingest(ws: &Workspace) -> CliResult<RunManifest> {
    let cfg = &ws.cfg;
    let upstream: &[Stage] = if ws.uses_corpus() { &[Stage::Corpus] } else { &[] };
    let (dir, mut rec) = ws.begin(Stage::Dataset, upstream)?;
    let specs = ws.datasets();
    let mut raw = Vec::new();
    let mut splits = Vec::new();
    for (di, d) in specs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&d.static_dir)
            .map_err(|e| CliError::io(&d.static_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for sp in files {
            let name = sp.file_name().expect("listed file has a name");
            let dp = d.dynamic_dir.join(name);
            if !dp.exists() {
                log::warn!("{}: skipping {}, no dynamic graph at {}", d.name, sp.display(), dp.display());
                continue;
            }
            let static_graph = load_graph(&sp, &rec.read_input(&sp)?)?;
            let dynamic_graph = load_graph(&dp, &rec.read_input(&dp)?)?;
            check_program_id(static_graph.program_id())?;
            raw.push(RawProgram {
                dataset: di,
                static_graph,
                dynamic_graph,
            });
        }
        let split: Option<Split> = match &d.split {
            Some(p) => Some(parse_json(p, &rec.read_input(p)?)?),
            None => None,
        };
        splits.push(split);
    }

    let prepared = raw
        .par_iter()
        .map(|r| prepare_program(&r.static_graph, &r.dynamic_graph, &cfg.filter, cfg.seed))
        .collect::<cgprune_core::Result<Vec<_>>>()?;

    let mut manifests = Vec::new();
    let mut programs = Vec::new();
    let mut keep = Vec::new();
    for (di, d) in specs.iter().enumerate() {
        let members: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].dataset == di).collect();
        let ids: Vec<String> = members.iter().map(|&i| raw[i].static_graph.program_id().to_owned()).collect();
        let (train, test) = match &splits[di] {
            Some(s) => {
                for id in s.train.iter().chain(&s.test).filter(|id| !ids.contains(id)) {
                    log::warn!("{}: split lists `{id}` but no usable graphs exist for it", d.name);
                }
                let keep_listed = |v: &[String]| -> Vec<String> {
                    let mut v: Vec<String> = v.iter().filter(|id| ids.contains(id)).cloned().collect();
                    v.sort();
                    v
                };
                (keep_listed(&s.train), keep_listed(&s.test))
            }
            None => default_split(&ids, 0.25, cfg.seed),
        };
        let mut counts = BTreeMap::new();
        for &i in &members {
            let id = raw[i].static_graph.program_id();
            let is_test = test.iter().any(|t| t == id);
            if !is_test && !train.iter().any(|t| t == id) {
                log::warn!("{}: skipping `{id}`, not listed in the split", d.name);
                continue;
            }
            if counts.insert(id.to_owned(), prepared[i].counts).is_some() {
                return Err(CliError::Core(Error::Integrity(format!(
                    "{}: program `{id}` appears twice",
                    d.name
                ))));
            }
            programs.push(ProgramEntry {
                program: id.to_owned(),
                dataset: d.name.clone(),
                test: is_test,
                sampled_edges: prepared[i].labels.len(),
            });
            keep.push(i);
        }
        manifests.push(DatasetManifest::new(&d.name, train, test, counts)?);
    }
    let combined = DatasetManifest::combine("combined", &manifests)?;

    for &i in &keep {
        let p = &prepared[i];
        let id = p.static_graph.program_id();
        rec.write(&dir.join("static").join(format!("{id}.json")), &p.static_graph.to_json_bytes(None)?)?;
        rec.write(&dir.join("dynamic").join(format!("{id}.json")), &p.dynamic_graph.to_json_bytes(None)?)?;
        let labels = csv_bytes(|b| write_labeled_jsonl(b, &p.labels))?;
        rec.write(&dir.join("labeled").join(format!("{id}.jsonl")), &labels)?;
    }
    programs.sort_by(|a, b| a.program.cmp(&b.program));
    let index = DatasetIndex {
        datasets: manifests,
        combined,
        programs,
    };
    log::info!(
        "ingested {} programs, prune/retain ratio {:.3}",
        index.programs.len(),
        index.combined.pr_ratio
    );
    rec.write_json(&dir.join("manifest.json"), &index)?;
    ws.finish(rec, Stage::Dataset)
}

/// `features`: one feature CSV per program.
pub fn features(ws: &Workspace) -> CliResult<RunManifest> {
    let fc = &ws.cfg.features;
    let (dir, mut rec) = ws.begin(Stage::Features, &[Stage::Dataset])?;
    let index = ws.index(&mut rec)?;
    let wants_embeddings = matches!(fc.family, FeatureFamily::Sem | FeatureFamily::Comb);
    let mut inputs = Vec::new();
    for p in &index.programs {
        let g = ws.graph(&mut rec, Stage::Dataset, "static", &p.program)?;
        let emb = match (&fc.embeddings_dir, wants_embeddings) {
            (Some(d), true) => {
                let path = d.join(format!("{}.jsonl", p.program));
                if path.exists() {
                    let bytes = rec.read_input(&path)?;
                    Some(load_semantic_embeddings::<f64>(&bytes).map_err(|e| in_file(&path, e))?)
                } else {
                    log::warn!("{}: no embeddings at {}, using signature vectors", p.program, path.display());
                    None
                }
            }
            (None, true) => {
                log::warn!("{}: no embeddings configured, using signature vectors", p.program);
                None
            }
            _ => None,
        };
        inputs.push((g, emb));
    }
    let built = inputs
        .par_iter()
        .map(|(g, emb): &(CallGraph, Option<HashMap<EdgeKey, Vec<f64>>>)| {
            let start = Instant::now();
            let fs = crate::pipeline::program_features(g, fc, emb.as_ref())?;
            let secs = start.elapsed().as_secs_f64();
            let bytes = csv_bytes(|b| fs.write_csv(b))?;
            Ok((g.program_id().to_owned(), bytes, secs))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut timing = Timings::new();
    for (id, bytes, secs) in built {
        rec.write(&dir.join(format!("{id}.csv")), &bytes)?;
        timing.insert(id, secs);
    }
    rec.write_timing(&dir.join("timing.json"), &json_bytes(&timing)?)?;
    ws.finish(rec, Stage::Features)
}

/// `train`: fits the configured model on the training programs.
pub fn train(ws: &Workspace) -> CliResult<RunManifest> {
    let (dir, mut rec) = ws.begin(Stage::Model, &[Stage::Dataset, Stage::Features])?;
    let index = ws.index(&mut rec)?;
    let (xs, ys) = ws.train_rows(&mut rec, &index)?;
    log::info!("training on {} edges", xs.len());
    let fitted = fit(ws.cfg.model, &xs, &ys, &ws.cfg.train, Some(ws.cfg.features.family))?;
    for w in &fitted.warnings {
        log::warn!("train: {w}");
    }
    rec.write(&dir.join("model.json"), &fitted.model.to_json_bytes()?)?;
    let log_bytes = csv_bytes(|b| write_training_log(&fitted.log, b))?;
    rec.write(&dir.join("training-log.csv"), &log_bytes)?;
    ws.finish(rec, Stage::Model)
}

/// `prune`: applies the model to every test program.
pub fn prune(ws: &Workspace) -> CliResult<RunManifest> {
    let pc = &ws.cfg.prune;
    let (dir, mut rec) = ws.begin(Stage::Pruned, &[Stage::Dataset, Stage::Features, Stage::Model])?;
    let index = ws.index(&mut rec)?;
    let model = ws.model(&mut rec)?;
    let mut inputs = Vec::new();
    for p in index.test_programs() {
        inputs.push((ws.graph(&mut rec, Stage::Dataset, "static", p)?, ws.features(&mut rec, p)?));
    }
    let outputs = inputs
        .par_iter()
        .map(|(g, fs)| {
            let start = Instant::now();
            let scored = score_edges(g, &model, fs)?;
            let pruned = scored.apply(pc.tau, pc.rule)?;
            let secs = start.elapsed().as_secs_f64();
            if pruned.missing_features > 0 {
                log::warn!("{}: {} edges had no features and were kept", g.program_id(), pruned.missing_features);
            }
            let probs = csv_bytes(|b| write_probabilities_csv(&scored, b))?;
            Ok((g.program_id().to_owned(), pruned.to_json_bytes()?, probs, secs))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut timing = Timings::new();
    for (id, graph, probs, secs) in outputs {
        rec.write(&dir.join(format!("{id}.json")), &graph)?;
        rec.write(&dir.join(format!("{id}.probs.csv")), &probs)?;
        timing.insert(id, secs);
    }
    rec.write_timing(&dir.join("timing.json"), &json_bytes(&timing)?)?;
    ws.finish(rec, Stage::Pruned)
}

fn read_timings(path: &Path) -> CliResult<Timings> {
    parse_json(path, &crate::store::read(path)?)
}

/// `eval`: scores pruned, unpruned and coin-flip graphs of the test programs.
pub fn eval(ws: &Workspace) -> CliResult<RunManifest> {
    let cfg = &ws.cfg;
    let (dir, mut rec) = ws.begin(Stage::Eval, &[Stage::Dataset, Stage::Features, Stage::Model, Stage::Pruned])?;
    let index = ws.index(&mut rec)?;
    let model = ws.model(&mut rec)?;
    let mut loaded = Vec::new();
    for p in index.test_programs() {
        loaded.push((
            ws.graph(&mut rec, Stage::Dataset, "static", p)?,
            ws.graph(&mut rec, Stage::Dataset, "dynamic", p)?,
            ws.graph(&mut rec, Stage::Pruned, "", p)?,
            ws.features(&mut rec, p)?,
        ));
    }
    let tests: Vec<TestProgram> = loaded
        .iter()
        .map(|(s, d, _, f)| TestProgram {
            static_graph: s,
            dynamic_graph: d,
            features: f,
        })
        .collect();

    let scores = loaded
        .iter()
        .map(|(_, d, p, _)| evaluate_graph(p, d))
        .collect::<cgprune_core::Result<Vec<_>>>()?;
    let w_retain = match &model {
        ModelArtifact::Learned(m) => m.config.as_ref().map(|c| c.w_retain),
        ModelArtifact::Random(_) => None,
    };
    let pruned = macro_average(
        &scores,
        EvalEcho {
            tau: Some(cfg.prune.tau),
            w_retain,
            feature_family: Some(cfg.features.family.to_string()),
            model: Some(model.id()),
        },
    )?;
    let unpruned = evaluate_unpruned(&tests)?;
    let coin = RandomClassifier { seed: cfg.seed };
    let random = evaluate(
        &tests,
        &coin,
        0.5,
        Default::default(),
        EvalEcho {
            tau: Some(0.5),
            model: Some(EdgeScorer::<f64>::id(&coin)),
            ..EvalEcho::default()
        },
    )?;
    log::info!(
        "eval: P {:.3} R {:.3} F1 {:.3} F2 {:.3} (unpruned P {:.3} R {:.3})",
        pruned.precision,
        pruned.recall,
        pruned.f1,
        pruned.f2,
        unpruned.precision,
        unpruned.recall
    );
    rec.write(&dir.join("report.csv"), &csv_bytes(|b| pruned.write_csv(b))?)?;
    rec.write(&dir.join("unpruned.csv"), &csv_bytes(|b| unpruned.write_csv(b))?)?;
    rec.write(&dir.join("random.csv"), &csv_bytes(|b| random.write_csv(b))?)?;
    rec.write_json(&dir.join("report.json"), &EvalSummary { pruned, unpruned, random })?;

    let feat = read_timings(&ws.dir(Stage::Features).join("timing.json"))?;
    let infer = read_timings(&ws.dir(Stage::Pruned).join("timing.json"))?;
    let timings = loaded
        .iter()
        .map(|(s, _, _, _)| {
            let id = s.program_id();
            let get = |t: &Timings| t.get(id).copied().unwrap_or(0.0);
            Ok(ProgramTiming::new(id, s.generation_time_s().unwrap_or(0.0), get(&feat), get(&infer))?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let runtime = runtime_report(timings);
    rec.write_timing(&dir.join("runtime.csv"), &csv_bytes(|b| runtime.write_csv(b))?)?;
    ws.finish(rec, Stage::Eval)
}

/// `sweep`: trains one model per retain weight and scores every threshold.
pub fn sweep(ws: &Workspace) -> CliResult<RunManifest> {
    let cfg = &ws.cfg;
    let (dir, mut rec) = ws.begin(Stage::Sweep, &[Stage::Dataset, Stage::Features])?;
    let index = ws.index(&mut rec)?;
    let (xs, ys) = ws.train_rows(&mut rec, &index)?;
    let mut loaded = Vec::new();
    for p in index.test_programs() {
        loaded.push((
            ws.graph(&mut rec, Stage::Dataset, "static", p)?,
            ws.graph(&mut rec, Stage::Dataset, "dynamic", p)?,
            ws.features(&mut rec, p)?,
        ));
    }
    let tests: Vec<TestProgram> = loaded
        .iter()
        .map(|(s, d, f)| TestProgram {
            static_graph: s,
            dynamic_graph: d,
            features: f,
        })
        .collect();
    let rows = sweep_grid(
        &xs,
        &ys,
        &cfg.train,
        &cfg.sweep.w1_grid,
        &cfg.sweep.tau_grid,
        cfg.prune.rule,
        &tests,
        Some(cfg.features.family),
    )?;
    rec.write(&dir.join("grid.csv"), &csv_bytes(|b| write_grid_csv(&rows, b))?)?;
    rec.write_json(&dir.join("grid.json"), &rows)?;
    ws.finish(rec, Stage::Sweep)
}

/// `vuln`: reachability of seeded vulnerable methods before and after pruning.
pub fn vuln(ws: &Workspace) -> CliResult<RunManifest> {
    let cfg = &ws.cfg;
    let (dir, mut rec) = ws.begin(Stage::Vuln, &[Stage::Dataset, Stage::Pruned])?;
    let index = ws.index(&mut rec)?;
    let mut loaded = Vec::new();
    for p in index.test_programs() {
        loaded.push((
            ws.graph(&mut rec, Stage::Dataset, "static", p)?,
            ws.graph(&mut rec, Stage::Pruned, "", p)?,
        ));
    }
    let mut all = Vec::new();
    for (base, pruned) in &loaded {
        let vc = VulnConfig {
            seed: program_seed(cfg.vuln.seed, base.program_id()),
            ..cfg.vuln.clone()
        };
        let marks = mark_vulnerable(base, &vc)?;
        let pruned_marks = marks
            .iter()
            .map(|&i| {
                pruned.node_idx(&base.node(i).uri).ok_or_else(|| {
                    CliError::Core(Error::Integrity(format!(
                        "{}: pruned graph lacks node {}",
                        base.program_id(),
                        base.node(i).uri
                    )))
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let before = timed_analysis(base, &marks, &vc, None)?;
        let after = timed_analysis(pruned, &pruned_marks, &vc, Some(cfg.prune.tau))?;
        let stable = [before.without_timing(), after.without_timing()];
        rec.write(&dir.join(format!("{}.json", base.program_id())), &json_bytes(&stable)?)?;
        all.push(before);
        all.push(after);
    }
    rec.write_timing(&dir.join("vuln.csv"), &csv_bytes(|b| write_vuln_csv(&all, b))?)?;
    ws.finish(rec, Stage::Vuln)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// `report`: one summary of the dataset, evaluation, vulnerability and
/// (when present) sweep results.
pub fn report(ws: &Workspace) -> CliResult<RunManifest> {
    let has_sweep = ws.dir(Stage::Sweep).join(RUN_MANIFEST).exists();
    let mut upstream = vec![Stage::Dataset, Stage::Eval, Stage::Vuln];
    if has_sweep {
        upstream.push(Stage::Sweep);
    }
    let (dir, mut rec) = ws.begin(Stage::Report, &upstream)?;
    let index = ws.index(&mut rec)?;
    let eval_path = ws.dir(Stage::Eval).join("report.json");
    let ev: EvalSummary = parse_json(&eval_path, &rec.read_input(&eval_path)?)?;
    let mut vulns: Vec<VulnReport> = Vec::new();
    for p in index.test_programs() {
        let path = ws.dir(Stage::Vuln).join(format!("{p}.json"));
        let pair: Vec<VulnReport> = parse_json(&path, &rec.read_input(&path)?)?;
        vulns.extend(pair);
    }
    let sweep = if has_sweep {
        let path = ws.dir(Stage::Sweep).join("grid.json");
        Some(parse_json::<Vec<GridRow<f64>>>(&path, &rec.read_input(&path)?)?)
    } else {
        None
    };
    let side = |pruned: bool, f: fn(&VulnReport) -> f64| {
        mean(vulns.iter().filter(|r| r.tau.is_some() == pruned).map(f))
    };
    let summary = Summary {
        dataset: index.combined.clone(),
        tau: ws.cfg.prune.tau,
        pruned: (&ev.pruned).into(),
        unpruned: (&ev.unpruned).into(),
        random: (&ev.random).into(),
        vuln: VulnSummary {
            unpruned_edges: side(false, |r| r.edges as f64),
            pruned_edges: side(true, |r| r.edges as f64),
            unpruned_reachable_node_fraction: side(false, |r| r.reachable_node_fraction),
            pruned_reachable_node_fraction: side(true, |r| r.reachable_node_fraction),
            unpruned_reachable_paths: side(false, |r| r.reachable_paths as f64),
            pruned_reachable_paths: side(true, |r| r.reachable_paths as f64),
        },
        sweep,
    };
    rec.write_json(&dir.join("summary.json"), &summary)?;
    rec.write(&dir.join("summary.md"), render_markdown(&summary).as_bytes())?;
    ws.finish(rec, Stage::Report)
}

fn render_markdown(s: &Summary) -> String {
    use std::fmt::Write;
    let mut md = String::new();
    let t = s.dataset.totals();
    let _ = writeln!(md, "# Pruning summary\n");
    let _ = writeln!(
        md,
        "{} training and {} test programs, {} retain and {} prune edges (ratio {:.2}).\n",
        s.dataset.train_programs.len(),
        s.dataset.test_programs.len(),
        t.retain,
        t.prune,
        s.dataset.pr_ratio
    );
    let _ = writeln!(md, "| graph | precision | recall | F1 | F2 |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for (name, sc) in [
        ("unpruned".to_owned(), &s.unpruned),
        (format!("pruned (tau {})", s.tau), &s.pruned),
        ("random".to_owned(), &s.random),
    ] {
        let _ = writeln!(
            md,
            "| {name} | {:.3} | {:.3} | {:.3} | {:.3} |",
            sc.precision, sc.recall, sc.f1, sc.f2
        );
    }
    let v = &s.vuln;
    let _ = writeln!(md, "\n| vulnerability client | edges | reachable paths | reachable fraction |");
    let _ = writeln!(md, "|---|---|---|---|");
    let _ = writeln!(
        md,
        "| unpruned | {:.1} | {:.1} | {:.3} |",
        v.unpruned_edges, v.unpruned_reachable_paths, v.unpruned_reachable_node_fraction
    );
    let _ = writeln!(
        md,
        "| pruned | {:.1} | {:.1} | {:.3} |",
        v.pruned_edges, v.pruned_reachable_paths, v.pruned_reachable_node_fraction
    );
    if let Some(rows) = &s.sweep {
        let _ = writeln!(md, "\n| w1 | tau | precision | recall | F1 | F2 |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for r in rows {
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
                r.w1, r.tau, r.precision, r.recall, r.f1, r.f2
            );
        }
    }
    md
}

/// Every stage in order; `gen-synth` only when no datasets are configured.
pub fn run_all(ws: &Workspace) -> CliResult<()> {
    if ws.uses_corpus() {
        gen_synth(ws)?;
    }
    ingest(ws)?;
    features(ws)?;
    train(ws)?;
    prune(ws)?;
    eval(ws)?;
    sweep(ws)?;
    vuln(ws)?;
    report(ws)?;
    Ok(())
}
