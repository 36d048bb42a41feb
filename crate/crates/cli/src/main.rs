//! `quadmotion` command-line tool.

mod commands;
mod config;
mod obj;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Overrides the directory that relative input and output paths are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "QUADMOTION_OUTPUT_ROOT";

/// Input or configuration problem (exit code 2).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(
    name = "quadmotion",
    version,
    about = "Synthetic quadruped motion: data, training, sampling, export, evaluation"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; defaults are used for anything it leaves out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set train.weights.kl=0.01` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Gendata {
        #[command(flatten)]
        common: Common,
        /// Corpus seed (sets `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the contents of a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train the video phase, the motion phase, or both.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by `gendata`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        phase: PhaseArg,
        /// First-phase checkpoint (directory or state file); required for `--phase 2`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Training seed (sets `train.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Drop the temporal smoothness term.
        #[arg(long)]
        no_temporal_smoothness: bool,
        /// Remove the spatial encoder and decoder.
        #[arg(long)]
        no_spatial_transformer: bool,
    },
    /// Draw motions from the learned prior.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of motions (sets `sample.count`).
        #[arg(long)]
        count: Option<usize>,
        /// Segments per motion (sets `sample.segments`).
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also export skinned OBJ frames for the first N motions.
        #[arg(long, value_name = "N", default_value_t = 0)]
        obj: usize,
    },
    /// Export one motion as one OBJ mesh per frame.
    Animate {
        #[command(flatten)]
        common: Common,
        /// Motion file written by `sample`.
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        motions: Option<PathBuf>,
        /// Index of the motion in `--motions`.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Dataset directory; exports the ground-truth clip named by `--sequence`.
        #[arg(long, requires = "sequence")]
        data: Option<PathBuf>,
        #[arg(long)]
        sequence: Option<String>,
    },
    /// Reconstruction metrics on held-out clips and motion chamfer distance of prior samples.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "ground_truth")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Score the ground truth itself instead of a model.
        #[arg(long)]
        ground_truth: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Invalid>().is_some()
            || cause.downcast_ref::<toml::de::Error>().is_some()
        {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<quadmotion::Error>() {
            return match e {
                quadmotion::Error::Io(_) | quadmotion::Error::NonFinite { .. } => 3,
                _ => 2,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
