mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{Exit, Failure};

/// Whole-body (133-keypoint) pose annotation toolkit.
///
/// Errors are written to stderr as one JSON object per line. Exit codes:
/// 0 success, 1 usage, 2 invalid input, 3 I/O. Set WHOLEBODY_THREADS to
/// bound the worker pool.
#[derive(Debug, Parser)]
#[command(name = "wholebody", version)]
pub struct Cli {
    /// JSON configuration file; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write face, hand and foot boxes for every ground-truth person.
    Propose(ProposeArgs),
    /// Fuse 17-keypoint ground truth with foot, face and hand detections.
    Merge(MergeArgs),
    /// Suppress redundant poses in a results file, image by image.
    Nms(NmsArgs),
    /// Compute mAP/AP50/AP75/APM/APL and the matching recall metrics.
    Evaluate(EvaluateArgs),
    /// Check a ground-truth or results file and list every problem.
    Validate(ValidateArgs),
    /// Summarise an annotation file.
    Stats(StatsArgs),
    /// Draw the skeletons of one image as SVG.
    Render(RenderArgs),
    /// Dump the keypoint layout, skeleton and sigma table as JSON.
    Schema(SchemaArgs),
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Clip boxes to the image frame.
    #[arg(long)]
    pub clip: bool,
    #[arg(long)]
    pub face_expansion: Option<f64>,
    #[arg(long)]
    pub hand_alpha: Option<f64>,
    #[arg(long)]
    pub hand_gamma: Option<f64>,
    #[arg(long)]
    pub foot_shank_factor: Option<f64>,
    /// Smallest side for every box kind.
    #[arg(long)]
    pub min_side: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub foot: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub face: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub lhand: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub rhand: Option<PathBuf>,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Record layout; inferred from the keypoint count unless it is 21.
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sigma_soft: Option<f64>,
    #[arg(long)]
    pub score_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,
    /// Also report each of the five parts separately.
    #[arg(long)]
    pub per_part: bool,
    /// JSON file of foot/face/hand sigmas.
    #[arg(long, value_name = "FILE")]
    pub sigmas: Option<PathBuf>,
    #[arg(long)]
    pub max_dets: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub path: PathBuf,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub path: PathBuf,
    #[arg(long)]
    pub image_id: u64,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub stroke_width: Option<f64>,
    #[arg(long)]
    pub marker_radius: Option<f64>,
    #[arg(long)]
    pub detail_radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    #[arg(long, value_name = "FILE")]
    pub sigmas: Option<PathBuf>,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("WHOLEBODY_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::usage(format!(
            "WHOLEBODY_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::usage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let message: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            let message = message.join(" ");
            let message = message.trim_start_matches("error: ");
            eprintln!("{}", Failure::usage(message).to_json_line());
            return ExitCode::from(Exit::Usage as u8);
        }
    };
    match configure_threads().and_then(|_| commands::run(cli)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            ExitCode::from(f.exit as u8)
        }
    }
}
