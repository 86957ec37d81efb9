//! Command-line front end for the moth detection pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mothtrap", version, about = "Moth detection in pheromone-trap images")]
pub struct Cli {
    /// Flat `key = value` configuration file; flags win over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override any configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Root under which default input and output directories live.
    #[arg(long, global = true, env = "MOTHTRAP_OUT", default_value = "runs")]
    pub root: PathBuf,

    /// Cap on worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by the commands that train a model.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Augmentation: none, trans, rot or both.
    #[arg(long)]
    pub aug: Option<String>,
    /// convnet or logreg.
    #[arg(long)]
    pub model: Option<String>,
    /// Fraction of training images to keep, stratified by moth presence.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Number of hard-negative rounds.
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trap dataset with train/val/test annotation files.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract positive and edge-mined negative patch manifests.
    Extract {
        /// Dataset directory holding train.csv and val.csv.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the Canny edge map of every training image as PNG.
        #[arg(long)]
        edges: bool,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Train a detector: stage 1, hard-negative rounds, stage 2.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use manifests written by `extract` instead of extracting again.
        #[arg(long)]
        patches: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Mine a model's most confident false positives as a patch manifest.
    Bootstrap {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Annotation file of the images to mine.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Maximum number of patches returned.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a trained model over images.
    Detect {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Annotation file, image directory or single image.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Minimum probability kept; 0 keeps every post-NMS detection.
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write one annotated PNG per image.
        #[arg(long)]
        overlay: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep thresholds and write curves, summaries and plots.
    Evaluate {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        /// object, image or both.
        #[arg(long, default_value = "both")]
        level: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare several detection files on one annotated set.
    Report {
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// `NAME=DETECTIONS_CSV`; repeatable.
        #[arg(long = "run", value_name = "NAME=FILE")]
        runs: Vec<String>,
        #[arg(long, default_value = "both")]
        level: String,
        /// Draw each run's detections at its F2-maximizing threshold.
        #[arg(long)]
        overlay: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize, train, detect and evaluate in one go.
    Repro {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
