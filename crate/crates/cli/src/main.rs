use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod outputs;

#[derive(Debug, Parser)]
#[command(name = "weedmap", version, about = "Unsupervised weed mapping for row-crop imagery")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config with one section per stage.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Override one config key, e.g. `--set hough.angle_gate_deg=15`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic field with ground truth.
    Synth {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Vegetation mask by ExG and Otsu.
    Segment {
        #[arg(long)]
        input: PathBuf,
    },
    /// Crop-row lines.
    Lines {
        #[arg(long)]
        input: PathBuf,
    },
    /// Crop mask, weed regions and unaugmented patches of one image.
    Label {
        #[arg(long)]
        input: PathBuf,
    },
    /// Labeled, augmented and split patches of one or more images.
    Dataset {
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
    },
    /// Fit the baseline classifier on an exported dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Classify every pixel of an image.
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
        model: Option<PathBuf>,
        /// CSV of `<image>_<x>_<y>,p_weed` window scores.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Patch AUC, line accuracy and pixel metrics.
    Eval {
        /// Exported dataset whose patches are scored.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        split: commands::SplitChoice,
        #[arg(long, conflicts_with = "scores")]
        model: Option<PathBuf>,
        /// CSV of `path,p_weed` scores keyed by dataset path.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Directory written by `synth`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Lines CSV written by `lines`.
        #[arg(long)]
        lines: Option<PathBuf>,
        /// Class map written by `infer`.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Synthesize (or load), label, train, infer and evaluate in one go.
    Pipeline {
        #[arg(long)]
        preset: Option<String>,
        /// Run on this image instead of synthetic fields.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the augmented dataset.
        #[arg(long)]
        export_dataset: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.common, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": e.code_name(),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
