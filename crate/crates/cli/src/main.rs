//! `nlos`: render scenes, build datasets, train, infer and evaluate.
//!
//! Exit codes: 0 success, 2 bad input, 3 numeric failure during training.
//! `NLOS_LOG_LEVEL` (error, info, debug) sets log verbosity.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nlos", version, about = "Lidar multipath NLOS toolkit")]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration overriding the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene file to detection maps and previews.
    Render { scene: PathBuf },
    /// Generate the toy dataset and its train/test split.
    Dataset,
    /// Train one of the two networks.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Reconstruct a depth map from one frame or record.
    Infer {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        compressor: PathBuf,
        input: PathBuf,
    },
    /// Score a trained remapper on a dataset's test split.
    Eval {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        compressor: PathBuf,
        dataset: PathBuf,
    },
}

#[derive(Subcommand)]
enum TrainCommand {
    /// Train the VAE on target depth maps; also writes the latent registry.
    Vae { dataset: PathBuf },
    /// Train the compressor against a latent registry.
    Compressor {
        dataset: PathBuf,
        /// Existing registry file.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// VAE parameter file to build the registry from.
        #[arg(long)]
        vae: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    log::debug!("using {} worker threads", rayon::current_num_threads());
    let config = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    let out = &cli.out;
    match &cli.command {
        Command::Render { scene } => commands::render(scene, out, &config),
        Command::Dataset => commands::dataset(out, &config),
        Command::Train(TrainCommand::Vae { dataset }) => commands::train_vae_cmd(dataset, out, &config),
        Command::Train(TrainCommand::Compressor { dataset, registry, vae }) => {
            commands::train_compressor_cmd(dataset, registry.as_deref(), vae.as_deref(), out, &config)
        }
        Command::Infer { vae, compressor, input } => commands::infer(vae, compressor, input, out, &config),
        Command::Eval { vae, compressor, dataset } => commands::eval(vae, compressor, dataset, out, &config),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<nlos_core::Error>() {
        Some(nlos_core::Error::NonFinite { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NLOS_LOG_LEVEL", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
