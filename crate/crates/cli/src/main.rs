use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cgprune::commands::{self, Workspace};
use cgprune::config::{ExperimentConfig, ModelKind};
use cgprune::{CliError, CliResult};
use cgprune_core::features::FeatureFamily;
use cgprune_core::pruner::DecisionRule;

#[derive(Parser)]
#[command(name = "cgprune", version, about = "Learn to prune false edges from static call graphs")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-program stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output root; overrides the config file (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of static and dynamic call graphs.
    GenSynth(SynthArgs),
    /// Filter, label and sample the configured datasets.
    Ingest(FilterArgs),
    /// Compute per-edge feature rows.
    Features(FeatureArgs),
    /// Train the edge classifier.
    Train(TrainArgs),
    /// Prune the test programs.
    Prune(PruneArgs),
    /// Grid over retain weights and thresholds.
    Sweep(SweepArgs),
    /// Precision, recall and F-scores against the dynamic graphs.
    Eval,
    /// Vulnerability reachability before and after pruning.
    Vuln(VulnArgs),
    /// Summarize all stage outputs.
    Report,
    /// Run every stage in order.
    Run,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    programs: Option<usize>,
    /// Target edges per program.
    #[arg(long)]
    size: Option<usize>,
    /// Target prune/retain ratio.
    #[arg(long)]
    imbalance: Option<f64>,
    #[arg(long)]
    signal_strength: Option<f64>,
    #[arg(long)]
    missed_edge_rate: Option<f64>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    sample_cap: Option<usize>,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long)]
    family: Option<FeatureFamily>,
    #[arg(long)]
    sig_dim: Option<usize>,
    #[arg(long)]
    embeddings_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_model_kind)]
    model: Option<ModelKind>,
    #[arg(long)]
    w_retain: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_parser = parse_rule)]
    rule: Option<DecisionRule>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    w1_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct VulnArgs {
    /// Vulnerable methods marked per program.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    warmup_runs: Option<usize>,
    #[arg(long)]
    measured_runs: Option<usize>,
}

fn parse_model_kind(s: &str) -> Result<ModelKind, String> {
    match s {
        "learned" => Ok(ModelKind::Learned),
        "random" => Ok(ModelKind::Random),
        other => Err(format!("unknown model `{other}` (expected learned or random)")),
    }
}

fn parse_rule(s: &str) -> Result<DecisionRule, String> {
    match s {
        "prune_confidence" => Ok(DecisionRule::PruneConfidence),
        "retain_threshold" => Ok(DecisionRule::RetainThreshold),
        other => Err(format!("unknown rule `{other}` (expected prune_confidence or retain_threshold)")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Applies command-line overrides; flags win over the config file.
fn apply_overrides(cfg: &mut ExperimentConfig, cmd: &Command) {
    match cmd {
        Command::GenSynth(a) => {
            set(&mut cfg.synth.programs, a.programs);
            set(&mut cfg.synth.edges_per_program, a.size);
            set(&mut cfg.synth.imbalance, a.imbalance);
            set(&mut cfg.synth.signal_strength, a.signal_strength);
            set(&mut cfg.synth.missed_edge_rate, a.missed_edge_rate);
        }
        Command::Ingest(a) => set(&mut cfg.filter.sample_cap, a.sample_cap),
        Command::Features(a) => {
            set(&mut cfg.features.family, a.family);
            set(&mut cfg.features.sig_dim, a.sig_dim);
            if a.embeddings_dir.is_some() {
                cfg.features.embeddings_dir = a.embeddings_dir.clone();
            }
        }
        Command::Train(a) => {
            set(&mut cfg.model, a.model);
            set(&mut cfg.train.w_retain, a.w_retain);
            set(&mut cfg.train.learning_rate, a.learning_rate);
            set(&mut cfg.train.epochs, a.epochs);
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.hidden_dim, a.hidden_dim);
            set(&mut cfg.train.dropout_rate, a.dropout_rate);
            set(&mut cfg.train.warmup_steps, a.warmup_steps);
        }
        Command::Prune(a) => {
            set(&mut cfg.prune.tau, a.tau);
            set(&mut cfg.prune.rule, a.rule);
        }
        Command::Sweep(a) => {
            set(&mut cfg.sweep.w1_grid, a.w1_grid.clone());
            set(&mut cfg.sweep.tau_grid, a.tau_grid.clone());
        }
        Command::Vuln(a) => {
            set(&mut cfg.vuln.k, a.k);
            set(&mut cfg.vuln.warmup_runs, a.warmup_runs);
            set(&mut cfg.vuln.measured_runs, a.measured_runs);
        }
        Command::Eval | Command::Report | Command::Run => {}
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    cfg.sync_seeds();
    apply_overrides(&mut cfg, &cli.command);
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ws = Workspace::new(cfg, out)?;
    match cli.command {
        Command::GenSynth(_) => commands::gen_synth(&ws).map(drop),
        Command::Ingest(_) => commands::ingest(&ws).map(drop),
        Command::Features(_) => commands::features(&ws).map(drop),
        Command::Train(_) => commands::train(&ws).map(drop),
        Command::Prune(_) => commands::prune(&ws).map(drop),
        Command::Sweep(_) => commands::sweep(&ws).map(drop),
        Command::Eval => commands::eval(&ws).map(drop),
        Command::Vuln(_) => commands::vuln(&ws).map(drop),
        Command::Report => commands::report(&ws).map(drop),
        Command::Run => commands::run_all(&ws),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
