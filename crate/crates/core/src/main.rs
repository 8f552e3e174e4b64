use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use forensic_manifold::pipeline::{Pipeline, RunConfig, Stage, StageSelection};
use forensic_manifold::{Error, Execution, Result};

/// Sparse-autoencoder feature discovery and forensic manifold analysis.
#[derive(Debug, Parser)]
#[command(name = "forensic-manifold", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one stage or the whole pipeline (`--stage all`, the default).
    Run {
        #[arg(long, default_value = "all")]
        stage: String,
        #[command(flatten)]
        common: Common,
    },
    /// Extraction and layerwise importance.
    Stage1(Common),
    /// Sparse-autoencoder training and latent statistics.
    Stage2(Common),
    /// Artifact manifold reports.
    Stage2b(Common),
    /// Steering curves.
    Stage3(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed, overriding the config and FM_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable data-parallel execution.
    #[arg(long)]
    sequential: bool,
}

fn execute(cli: Cli) -> Result<()> {
    let (selection, common) = match cli.command {
        Command::Run { stage, common } => (
            stage
                .parse::<StageSelection>()
                .map_err(|e| Error::Config(e.to_string()))?,
            common,
        ),
        Command::Stage1(c) => (StageSelection::Only(Stage::One), c),
        Command::Stage2(c) => (StageSelection::Only(Stage::Two), c),
        Command::Stage2b(c) => (StageSelection::Only(Stage::TwoB), c),
        Command::Stage3(c) => (StageSelection::Only(Stage::Three), c),
    };
    let mut config = RunConfig::load(&common.config)?;
    if let Some(out) = common.out {
        config.output_dir = out;
    }
    config.resolve_seed(common.seed)?;
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let pipeline = Pipeline::new(config, exec)?;
    let report = pipeline.run(selection)?;
    println!(
        "{} (stage4 completed: {})",
        pipeline
            .output_dir()
            .join(forensic_manifold::pipeline::REPORT_FILE)
            .display(),
        report.stage4.completed
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
