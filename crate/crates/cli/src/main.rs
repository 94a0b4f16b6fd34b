use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Scene-aware reaching motion: corpus generation, training, generation,
/// evaluation and capture post-processing.
#[derive(Parser, Debug)]
#[command(name = "reach", version, about)]
struct Cli {
    /// Run every data-parallel step on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON configuration file for the command.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a procedural synthetic corpus into a directory.
    GenCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Split a corpus into train and test ids.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Random)]
        kind: SplitChoice,
        #[arg(long, default_value_t = 0.85)]
        train_ratio: f64,
        #[arg(long, default_value_t = 1)]
        holdout_tasks: usize,
    },
    /// Train a refiner; writes a checkpoint and a CSV loss log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Overrides the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict the selected sequences of a corpus with a checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Predict the test ids of this split instead of every sequence.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Score predictions against the corpus; writes CSV and JSON reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// Sequence file to score; the corpus ground truth when omitted.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Checkpoint the predictions came from, checked for skeleton
        /// compatibility.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score only the test ids of this split.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Marker-swap and joint-jump detection.
    Qa {
        #[command(flatten)]
        common: Common,
        /// Sequence file to check for joint jumps.
        #[arg(long)]
        sequences: Option<PathBuf>,
        /// BVH clip to check for joint jumps.
        #[arg(long)]
        bvh: Option<PathBuf>,
        /// Scale applied to BVH offsets and translations (to meters).
        #[arg(long, default_value_t = 0.01)]
        bvh_scale: f64,
        /// JSON list of labeled marker frames to check for swaps.
        #[arg(long)]
        markers: Option<PathBuf>,
    },
    /// Estimate the headset clock offset and resample onto mocap frames.
    Sync {
        #[command(flatten)]
        common: Common,
        /// JSON headset track.
        #[arg(long)]
        headset: PathBuf,
        /// JSON list of mocap head-bone positions at the configured rate.
        #[arg(long)]
        mocap: PathBuf,
    },
    /// Solve headset-to-skeleton calibrations.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// JSON list of {r_e, r_ht, f_h} instances.
        #[arg(long)]
        input: PathBuf,
    },
    /// Sample and order start/goal pairs from a scene's task regions.
    SampleTasks {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 4)]
        per_pair: usize,
        #[arg(long, default_value_t = reach_core::scene::DEFAULT_MAX_SURFACE_DIST)]
        max_surface_dist: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitChoice {
    Random,
    Task,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    reach_core::exec::init_threads_from_env();
    let exec = if cli.sequential { reach_core::Execution::Sequential } else { reach_core::Execution::Parallel };
    match commands::run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
