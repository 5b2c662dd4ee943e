//! Command-line pipeline driver.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure,
//! 3 I/O failure. Set `SDFIT_THREADS` to widen mesh-extraction sampling
//! across worker threads.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AblationAxis, GroundTruth};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "sdfit",
    about = "Neural signed distance fields from noisy point clouds",
    version
)]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configuration's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write clean and noisy synthetic clouds for every roster shape.
    MakeData,
    /// Train the decoder prior on the roster's analytic signed distances.
    TrainPrior {
        /// Continue from an existing prior checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Finetune a prior on one noisy cloud and extract the surface mesh.
    Reconstruct {
        /// Input point cloud (.xyz or .ply).
        #[arg(long)]
        cloud: PathBuf,
        /// Prior checkpoint from train-prior.
        #[arg(long)]
        prior: PathBuf,
    },
    /// Project every point of a cloud onto a finetuned zero-level set.
    Denoise {
        #[arg(long)]
        cloud: PathBuf,
        /// Finetuned checkpoint from reconstruct.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare a reconstruction against ground truth.
    Eval {
        /// Reconstructed mesh (.obj or .ply).
        #[arg(long)]
        recon: PathBuf,
        /// Roster shape id serving as analytic ground truth.
        #[arg(long, conflicts_with = "gt_mesh")]
        gt_shape: Option<String>,
        /// Ground-truth mesh file.
        #[arg(long)]
        gt_mesh: Option<PathBuf>,
    },
    /// Sweep one configuration axis and report CD_L2 per cell.
    Ablate {
        #[arg(long, value_enum)]
        axis: AblationAxis,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    // One seed drives every stage.
    config.prior.seed = config.seed;
    config.finetune.seed = config.seed;

    match cli.command {
        Command::MakeData => commands::cmd_make_data(&config),
        Command::TrainPrior { resume } => commands::cmd_train_prior(&config, resume.as_deref()),
        Command::Reconstruct { cloud, prior } => {
            commands::cmd_reconstruct(&config, &cloud, &prior)
        }
        Command::Denoise { cloud, checkpoint } => {
            commands::cmd_denoise(&config, &cloud, &checkpoint)
        }
        Command::Eval { recon, gt_shape, gt_mesh } => {
            let gt = match (&gt_shape, &gt_mesh) {
                (Some(id), None) => GroundTruth::ShapeId(id),
                (None, Some(path)) => GroundTruth::MeshPath(path),
                _ => anyhow::bail!("eval needs exactly one of --gt-shape or --gt-mesh"),
            };
            commands::cmd_eval(&config, &recon, gt)
        }
        Command::Ablate { axis } => commands::cmd_ablate(&config, axis),
    }
}

/// Map failures onto the documented exit codes.
fn classify(e: &anyhow::Error) -> u8 {
    use sdfit_core::Error as E;
    if let Some(core) = e.downcast_ref::<E>() {
        return match core {
            E::NonFiniteLoss { .. }
            | E::NonFiniteGradient { .. }
            | E::NonFiniteField(..)
            | E::VanishingGradient(..)
            | E::NonFiniteCoordinate { .. } => 2,
            E::Io { .. } | E::Parse { .. } | E::EmptyCloud => 3,
            _ => 1,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    // Configuration and validation problems.
    1
}
