use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdfg::config::RunConfig;
use mdfg::pipeline::{self, stage, StageError, Workspace};

#[derive(Parser)]
#[command(name = "mdfg", version, about = "Shallow-feature guided contrastive sea-clutter target detector")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Synthesize the scenario into data.rds.
    SynthGen,
    /// Segment, split and write reference.toml and features.csv.
    ExtractFeatures,
    /// Fit feature weights into gini.toml.
    GiniWeights,
    /// Contrastive pre-training.
    Pretrain,
    /// Frozen-encoder fine-tuning.
    Finetune,
    /// Threshold from validation clutter.
    Calibrate,
    /// Test-split report and scores.
    Evaluate,
    /// Sweep alpha over the configured list.
    AblateAlpha,
    /// All stages in order.
    Pipeline,
}

fn run(cli: &Cli) -> Result<(), StageError> {
    let config_err = |cause: String| StageError {
        stage: stage::CONFIG,
        kind: pipeline::FailureKind::Config,
        cause,
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| config_err(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(format!("--threads {n}: {e}")))?;
    }
    let ws = Workspace::new(&cli.out);
    match cli.command {
        Command::SynthGen => pipeline::synth_gen(&cfg, &ws),
        Command::ExtractFeatures => pipeline::extract_features(&cfg, &ws),
        Command::GiniWeights => pipeline::gini_weights(&cfg, &ws),
        Command::Pretrain => pipeline::run_pretrain(&cfg, &ws).map(drop),
        Command::Finetune => pipeline::run_finetune(&cfg, &ws),
        Command::Calibrate => pipeline::calibrate(&cfg, &ws).map(drop),
        Command::Evaluate => pipeline::run_evaluate(&cfg, &ws).map(drop),
        Command::AblateAlpha => pipeline::ablate_alpha(&cfg, &ws).map(drop),
        Command::Pipeline => pipeline::run_pipeline(&cfg, &ws).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MDFG_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdfg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
